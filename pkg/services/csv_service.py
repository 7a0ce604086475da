import csv
import logging
import os
import re
from typing import List, Optional

import numpy as np
import pandas as pd

from models.dataset import AugmentedDataset, Dataset, RegionStats, SplitResult
from models.errors import ParseError, SchemaMismatchError, UndefinedProportionError

logger = logging.getLogger(__name__)

FEATURE_PATTERN = re.compile(r'^f(\d+)$')


class CSVService:
    """Service for dataset file I/O, stratified splitting and mixing."""

    @staticmethod
    def read_csv(path: str, target_kind: Optional[str] = None, n_regions: Optional[int] = None) -> Dataset:
        """Parse a dataset CSV, naming the first offending line on failure.

        Handles:
        - Empty files (0 bytes)
        - Duplicate or unknown column names
        - Missing region column
        - Malformed rows (wrong field count)
        - Non-numeric or non-finite cells
        - Header-only files (empty dataset)

        Args:
            path: Path to CSV file with columns f0..f{d-1}, optional y, region, optional provenance
            target_kind: 'class' or 'continuous'; when omitted, 0/1 targets read as
                'class' and anything else as 'continuous'
            n_regions: Region count K; defaults to the largest region index present

        Returns:
            Parsed Dataset
        """
        if os.path.getsize(path) == 0:
            raise ParseError("dataset file is empty", line=1)

        with open(path, 'r', encoding='utf-8', newline='') as f:
            header = next(csv.reader([f.readline()]), [])
        header = [h.strip() for h in header]
        if len(header) != len(set(header)):
            duplicates = sorted({h for h in header if header.count(h) > 1})
            raise ParseError(f"duplicate column names: {', '.join(duplicates)}", line=1)

        feature_columns = CSVService._check_columns(header)

        try:
            df = pd.read_csv(path, encoding='utf-8', dtype=str, keep_default_na=False,
                             on_bad_lines='error', skipinitialspace=True)
        except pd.errors.ParserError as e:
            match = re.search(r'line (\d+)', str(e))
            raise ParseError("malformed row (wrong number of fields)",
                             line=int(match.group(1)) if match else None) from e
        except UnicodeDecodeError as e:
            raise ParseError("file is not valid UTF-8") from e

        columns = {c.strip(): c for c in df.columns}
        features = np.column_stack(
            [CSVService._parse_numeric(df[columns[c]].tolist(), c) for c in feature_columns]
        ) if len(df) else np.zeros((0, len(feature_columns)))

        region_values = CSVService._parse_numeric(df[columns['region']].tolist(), 'region')
        if np.any(region_values != np.round(region_values)) or np.any(region_values < 1):
            bad = int(np.flatnonzero((region_values != np.round(region_values)) | (region_values < 1))[0])
            raise ParseError("region must be a positive integer", line=bad + 2)
        region = region_values.astype(np.int64)

        target = None
        kind = 'none'
        if 'y' in columns:
            target = CSVService._parse_numeric(df[columns['y']].tolist(), 'y')
            if target_kind is not None:
                kind = target_kind
            else:
                kind = 'class' if len(target) and np.all(np.isin(target, (0.0, 1.0))) else 'continuous'
                logger.info("Inferred target kind '%s' for %s; pass target_kind to override", kind, path)

        synthetic = None
        if 'provenance' in columns:
            values = [v.strip() for v in df[columns['provenance']].tolist()]
            for i, v in enumerate(values):
                if v not in ('real', 'synthetic'):
                    raise ParseError(f"provenance must be 'real' or 'synthetic', got '{v}'", line=i + 2)
            synthetic = np.array([v == 'synthetic' for v in values], dtype=bool)

        if n_regions is not None and len(region) and region.max() > n_regions:
            raise ParseError(f"region index {int(region.max())} exceeds K={n_regions}")

        return Dataset(features=features, region=region, target=target, target_kind=kind,
                       synthetic=synthetic, n_regions=n_regions)

    @staticmethod
    def _check_columns(header: List[str]) -> List[str]:
        if 'region' not in header:
            raise ParseError("missing required column 'region'", line=1)
        feature_ids = []
        for name in header:
            match = FEATURE_PATTERN.match(name)
            if match:
                feature_ids.append(int(match.group(1)))
            elif name not in ('y', 'region', 'provenance'):
                raise ParseError(f"unknown column '{name}'", line=1)
        if sorted(feature_ids) != list(range(len(feature_ids))):
            raise ParseError("feature columns must be f0..f{d-1} without gaps", line=1)
        return [f"f{i}" for i in range(len(feature_ids))]

    @staticmethod
    def _parse_numeric(values: List[str], column: str) -> np.ndarray:
        out = np.empty(len(values), dtype=np.float64)
        for i, raw in enumerate(values):
            try:
                value = float(raw)
            except (TypeError, ValueError):
                raise ParseError(f"non-numeric value '{raw}' in column '{column}'", line=i + 2) from None
            if not np.isfinite(value):
                raise ParseError(f"non-finite value '{raw}' in column '{column}'", line=i + 2)
            out[i] = value
        return out

    @staticmethod
    def write_csv(dataset: Dataset, path: str) -> None:
        """Write a dataset losslessly (17 significant digits)."""
        data = {f"f{j}": dataset.features[:, j] for j in range(dataset.d)}
        if dataset.target is not None:
            data['y'] = dataset.target
        data['region'] = dataset.region
        data['provenance'] = np.where(dataset.synthetic, 'synthetic', 'real')
        df = pd.DataFrame(data, columns=list(data.keys()))
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        df.to_csv(path, index=False, float_format='%.17g', encoding='utf-8', lineterminator='\n')

    @staticmethod
    def region_stats(dataset: Dataset) -> RegionStats:
        """Exact region counts n_k and proportions p_k = n_k / n."""
        if dataset.n == 0:
            raise UndefinedProportionError("region proportions of an empty dataset are undefined")
        counts = np.bincount(dataset.region, minlength=dataset.n_regions + 1)[1:]
        return RegionStats(counts=counts, proportions=counts / dataset.n)

    @staticmethod
    def stratified_split(dataset: Dataset, r: float, seed: int) -> SplitResult:
        """Per-region split sending floor(r * n_k) rows to Z_g, the rest to Z_r.

        The per-region permutation depends only on the seed, so the generator
        parts for increasing r are nested.
        """
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"split ratio must lie in [0, 1], got {r}")
        rng = np.random.default_rng(seed)
        generator_rows, reserved_rows = [], []
        for k in range(1, dataset.n_regions + 1):
            members = rng.permutation(dataset.region_index(k))
            n_g = int(np.floor(r * len(members) + 1e-9))
            generator_rows.append(members[:n_g])
            reserved_rows.append(members[n_g:])
        g_index = np.sort(np.concatenate(generator_rows)) if generator_rows else np.zeros(0, dtype=np.int64)
        r_index = np.sort(np.concatenate(reserved_rows)) if reserved_rows else np.zeros(0, dtype=np.int64)
        return SplitResult(
            generator_part=dataset.subset(g_index),
            reserved_part=dataset.subset(r_index),
            generator_index=g_index,
            reserved_index=r_index,
        )

    @staticmethod
    def mix(reserved: Dataset, synthetic: Dataset) -> AugmentedDataset:
        """Stable concatenation Z_c = Z_r followed by the synthetic rows."""
        if reserved.schema != synthetic.schema:
            raise SchemaMismatchError(
                f"cannot mix schema {reserved.schema} with synthetic schema {synthetic.schema}")
        target = None
        if reserved.target is not None:
            target = np.concatenate([reserved.target, synthetic.target])
        return AugmentedDataset(
            features=np.vstack([reserved.features, synthetic.features]),
            region=np.concatenate([reserved.region, synthetic.region]),
            target=target,
            target_kind=reserved.target_kind,
            synthetic=np.concatenate([reserved.synthetic, synthetic.synthetic]),
            n_regions=reserved.n_regions,
        )

    @staticmethod
    def concat(parts: List[Dataset]) -> Dataset:
        """Stable concatenation of datasets sharing one schema."""
        first = parts[0]
        for p in parts[1:]:
            if p.schema != first.schema:
                raise SchemaMismatchError(f"schema {p.schema} differs from {first.schema}")
        return Dataset(
            features=np.vstack([p.features for p in parts]),
            region=np.concatenate([p.region for p in parts]),
            target=None if first.target is None else np.concatenate([p.target for p in parts]),
            target_kind=first.target_kind,
            synthetic=np.concatenate([p.synthetic for p in parts]),
            n_regions=first.n_regions,
        )

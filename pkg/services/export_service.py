"""Export service for result tables, manifests and text reports."""
import hashlib
import json
import logging
import math
import os
import platform
from importlib import metadata
from typing import Any, Dict, List, Optional

import pandas as pd

from models.experiment import TuneResult

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ['method', 'variant', 'region', 'metric', 'mean', 'se', 'seeds']
TRACKED_PACKAGES = ('numpy', 'scipy', 'pandas', 'joblib', 'click', 'python-dotenv', 'tqdm')
FLOAT_FORMAT = '%.10g'


def _json_safe(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


class ExportService:
    """Writers for every file a command leaves in its output directory."""

    @staticmethod
    def _write_frame(df: pd.DataFrame, path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8', lineterminator='\n')
        logger.info("Wrote %s (%d rows)", path, len(df))
        return path

    @staticmethod
    def _write_json(data: Any, path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(_json_safe(data), f, indent=2, sort_keys=True)
            f.write('\n')
        logger.info("Wrote %s", path)
        return path

    @staticmethod
    def results_frame(results: List[TuneResult]) -> pd.DataFrame:
        """One row per (method, variant, region|overall) with mean and SE over seeds."""
        rows = []
        for result in results:
            seeds = ';'.join(str(s) for s in result.best['seed'].tolist())
            for region, (mean, se) in result.summary.items():
                rows.append({'method': result.method, 'variant': result.variant,
                             'region': region.replace('region_', ''), 'metric': result.metric,
                             'mean': mean, 'se': se, 'seeds': seeds})
        return pd.DataFrame(rows, columns=RESULT_COLUMNS)

    @staticmethod
    def write_results(results: List[TuneResult], path: str) -> str:
        return ExportService._write_frame(ExportService.results_frame(results), path)

    @staticmethod
    def write_tuning_table(result: TuneResult, path: str) -> str:
        return ExportService._write_frame(result.table, path)

    @staticmethod
    def write_sweep(sweep: pd.DataFrame, path: str) -> str:
        return ExportService._write_frame(sweep, path)

    @staticmethod
    def write_index_reports(reports: List[Dict[str, Any]], path: str) -> str:
        return ExportService._write_json(reports, path)

    @staticmethod
    def config_digest(raw: bytes) -> str:
        return hashlib.sha256(raw).hexdigest()

    @staticmethod
    def package_versions() -> Dict[str, Optional[str]]:
        versions = {'python': platform.python_version()}
        for name in TRACKED_PACKAGES:
            try:
                versions[name] = metadata.version(name)
            except metadata.PackageNotFoundError:
                versions[name] = None
        return versions

    @staticmethod
    def write_manifest(path: str, command: str, config: Dict[str, Any], config_sha256: str,
                       seeds: List[int], outputs: List[str], extra: Optional[Dict[str, Any]] = None) -> str:
        """Everything needed to reproduce a command's outputs; no timestamps."""
        manifest = {
            'command': command,
            'config': config,
            'config_sha256': config_sha256,
            'seeds': list(seeds),
            'versions': ExportService.package_versions(),
            'outputs': sorted(os.path.basename(p) for p in outputs),
        }
        if extra:
            manifest.update(extra)
        return ExportService._write_json(manifest, path)

    @staticmethod
    def generate_text_report(results: List[TuneResult], title: str = 'CODSA EXPERIMENT REPORT') -> str:
        """Plain-text summary table: mean (standard error) per region and overall.

        Args:
            results: Tuned methods to list, in order
            title: Heading line

        Returns:
            Formatted text report
        """
        lines = ["=" * 60, title, "=" * 60]
        for result in results:
            lines.append(f"{result.method} ({result.variant}) - {result.metric}, {len(result.best)} seed(s)")
            lines.append("-" * 60)
            for region, (mean, se) in result.summary.items():
                label = region.replace('_', ' ').capitalize()
                lines.append(f"  {label:<12} {mean:>10.4f} ({se:.4f})")
            if not result.best.empty:
                chosen = result.best[['seed', 'r', 'm_over_n', 'alpha_1']].to_dict('records')
                lines.append("  Selected: " + "; ".join(
                    f"seed {int(c['seed'])}: r={c['r']:g}, m/n={c['m_over_n']:g}, alpha1={c['alpha_1']:.3f}"
                    for c in chosen))
            lines.append("")
        lines.extend(["=" * 60, "End of Report", "=" * 60])
        return "\n".join(lines) + "\n"

    @staticmethod
    def write_text_report(results: List[TuneResult], path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(ExportService.generate_text_report(results))
        logger.info("Wrote %s", path)
        return path

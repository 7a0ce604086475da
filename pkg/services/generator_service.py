"""Conditional latent diffusion generator service."""
import json
import logging
import math
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from config import Config
from models.dataset import Dataset
from models.errors import (DimensionError, EmptyInputError, SchemaMismatchError, StateError,
                           TrainingDivergenceError)
from models.generator import (AutoencoderModel, AutoencoderSpec, DiffusionModel, GeneratorModel,
                              NoiseSchedule, ScoreNetSpec)
from models.network import MlpParams, MlpSpec
from services.allocation import check_simplex, largest_remainder
from services.nn_service import NNService
from services.seeding import derive_seed

logger = logging.getLogger(__name__)

NoiseFn = Callable[[np.ndarray, int], np.ndarray]


class GeneratorService:
    """Trains, samples and persists region-conditioned latent diffusion generators."""

    # Autoencoder

    @staticmethod
    def joint_matrix(dataset: Dataset, with_target: bool) -> np.ndarray:
        """Rows fed to the autoencoder: features, plus y for continuous targets."""
        if with_target:
            return np.column_stack([dataset.features, dataset.target])
        return dataset.features

    @staticmethod
    def train_autoencoder(data: Dataset, spec: AutoencoderSpec, epochs: int, lr: float, seed: int,
                          batch_size: int = Config.DEFAULT_BATCH_SIZE) -> AutoencoderModel:
        """Fit encoder/decoder with squared reconstruction loss on z-scored rows.

        Returns:
            AutoencoderModel whose recon_error is the final mean squared error
            over the (standardized) training rows
        """
        if data.n == 0:
            raise EmptyInputError("cannot train an autoencoder on an empty dataset")
        with_target = data.target_kind == 'continuous'
        x = GeneratorService.joint_matrix(data, with_target)
        width = x.shape[1]
        if spec.latent_dim < 1 or spec.latent_dim > width:
            raise DimensionError(f"latent dimension {spec.latent_dim} must lie in 1..{width}")

        shift = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
        z = (x - shift) / scale

        rng = np.random.default_rng(seed)
        hidden = tuple(spec.hidden_sizes)
        encoder = NNService.init_params(MlpSpec((width,) + hidden + (spec.latent_dim,)), rng)
        decoder = NNService.init_params(MlpSpec((spec.latent_dim,) + hidden[::-1] + (width,)), rng)
        enc_state = NNService.init_adam(encoder, lr)
        dec_state = NNService.init_adam(decoder, lr)

        for epoch in range(epochs):
            total = 0.0
            for idx in NNService.minibatches(len(z), batch_size, rng):
                batch = z[idx]
                u, enc_cache = NNService.forward(encoder, batch)
                recon, dec_cache = NNService.forward(decoder, u)
                loss, upstream = NNService.loss_mse(recon, batch)
                if not np.isfinite(loss):
                    raise TrainingDivergenceError(f"autoencoder loss diverged at epoch {epoch}")
                dec_grads, latent_grad = NNService.backward(decoder, dec_cache, upstream)
                enc_grads, _ = NNService.backward(encoder, enc_cache, latent_grad)
                decoder, dec_state = NNService.adam_step(decoder, dec_grads, dec_state)
                encoder, enc_state = NNService.adam_step(encoder, enc_grads, enc_state)
                total += loss * len(idx)
            logger.debug("autoencoder epoch %d loss %.6f", epoch, total / len(z))

        recon = NNService.predict(decoder, NNService.predict(encoder, z))
        recon_error, _ = NNService.loss_mse(recon, z)
        if not np.isfinite(recon_error):
            raise TrainingDivergenceError("autoencoder reconstruction error is not finite")
        logger.info("Autoencoder trained: %d rows, d_u=%d, reconstruction error %.5f",
                    data.n, spec.latent_dim, recon_error)
        return AutoencoderModel(encoder=encoder, decoder=decoder, latent_dim=spec.latent_dim,
                                shift=shift, scale=scale, with_target=with_target,
                                recon_error=float(recon_error))

    @staticmethod
    def encode(ae: AutoencoderModel, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != ae.input_dim:
            raise DimensionError(f"rows of shape {rows.shape} do not match autoencoder input {ae.input_dim}")
        return NNService.predict(ae.encoder, (rows - ae.shift) / ae.scale)

    @staticmethod
    def decode(ae: AutoencoderModel, latents: np.ndarray) -> np.ndarray:
        latents = np.asarray(latents, dtype=np.float64)
        if latents.ndim != 2 or latents.shape[1] != ae.latent_dim:
            raise DimensionError(f"latents of shape {latents.shape} do not match d_u={ae.latent_dim}")
        return NNService.predict(ae.decoder, latents) * ae.scale + ae.shift

    @staticmethod
    def pretrain_transfer(source: Dataset, spec: AutoencoderSpec, epochs: int, lr: float, seed: int,
                          target: Optional[Dataset] = None,
                          batch_size: int = Config.DEFAULT_BATCH_SIZE) -> AutoencoderModel:
        """Train an encoder-decoder on source data for frozen reuse on a target task."""
        if target is not None and (source.d, source.target_kind) != (target.d, target.target_kind):
            raise SchemaMismatchError(
                f"source schema {(source.d, source.target_kind)} differs from target "
                f"{(target.d, target.target_kind)}")
        ae = GeneratorService.train_autoencoder(source, spec, epochs, lr, seed, batch_size)
        ae.pretrained = True
        return ae

    # Diffusion

    @staticmethod
    def make_schedule(T: int = 1000, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
        if T < 1:
            raise ValueError(f"T must be >= 1, got {T}")
        if not 0.0 < beta_min <= beta_max < 1.0:
            raise ValueError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
        betas = np.linspace(beta_min, beta_max, T, dtype=np.float64)
        alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        return NoiseSchedule(T=T, beta_min=beta_min, beta_max=beta_max, betas=betas, alpha_bars=alpha_bars)

    @staticmethod
    def forward_diffuse(schedule: NoiseSchedule, u0: np.ndarray, t, noise: np.ndarray) -> np.ndarray:
        """Closed form u_t = sqrt(abar_t) u0 + sqrt(1 - abar_t) eps.

        ``t`` is one step in 1..T or one step per row.
        """
        t_arr = np.asarray(t, dtype=np.int64)
        if np.any(t_arr < 1) or np.any(t_arr > schedule.T):
            raise ValueError(f"time step out of range 1..{schedule.T}")
        abar = schedule.alpha_bars[t_arr]
        if abar.ndim == 1:
            abar = abar[:, None]
        return np.sqrt(abar) * u0 + np.sqrt(1.0 - abar) * noise

    @staticmethod
    def _score_inputs(model: DiffusionModel, u_t: np.ndarray, onehot: np.ndarray, t: np.ndarray):
        emb, emb_cache = NNService.forward(model.time_embed, (t / model.schedule.T).reshape(-1, 1))
        return np.hstack([u_t, onehot, emb]), emb_cache

    @staticmethod
    def train_score_network(latents: np.ndarray, regions: np.ndarray, schedule: NoiseSchedule,
                            spec: ScoreNetSpec, epochs: int, lr: float, seed: int,
                            n_regions: Optional[int] = None,
                            batch_size: int = Config.DEFAULT_BATCH_SIZE) -> DiffusionModel:
        """Minimize E||eps - eps_theta(u_t, zeta, t)||^2 with t uniform on 1..T.

        Args:
            latents: Latent rows u_0 (n x d_u)
            regions: 1-based region index per row
            schedule: Discrete noise schedule
            spec: Score network depth/width and time-embedding size

        Returns:
            Trained DiffusionModel
        """
        latents = np.asarray(latents, dtype=np.float64)
        regions = np.asarray(regions, dtype=np.int64).reshape(-1)
        if latents.ndim != 2 or len(latents) != len(regions):
            raise DimensionError("latents and regions disagree in length")
        if len(latents) == 0:
            raise EmptyInputError("no latent rows to train the score network on")
        if not np.all(np.isfinite(latents)):
            raise TrainingDivergenceError("latents contain non-finite values")
        n_regions = int(n_regions or regions.max())
        if regions.min() < 1 or regions.max() > n_regions:
            raise ValueError(f"region indices must lie in 1..{n_regions}")
        if spec.depth < 1:
            raise ValueError("score network needs at least one layer")

        d_u = latents.shape[1]
        shift = latents.mean(axis=0)
        scale = latents.std(axis=0)
        scale[scale == 0] = 1.0
        z = (latents - shift) / scale
        onehot = np.eye(n_regions)[regions - 1]

        rng = np.random.default_rng(seed)
        time_embed = NNService.init_params(MlpSpec((1, spec.embed_dim, spec.embed_dim)), rng)
        layers = (d_u + n_regions + spec.embed_dim,) + (spec.width,) * (spec.depth - 1) + (d_u,)
        score_net = NNService.init_params(MlpSpec(layers), rng)
        model = DiffusionModel(score_net=score_net, time_embed=time_embed, schedule=schedule,
                               n_regions=n_regions, latent_dim=d_u, latent_shift=shift,
                               latent_scale=scale, trained=False)
        net_state = NNService.init_adam(score_net, lr)
        emb_state = NNService.init_adam(time_embed, lr)

        epoch_loss = float('nan')
        for epoch in tqdm(range(epochs), desc='score network', leave=False, disable=not Config.PROGRESS):
            total = 0.0
            for idx in NNService.minibatches(len(z), batch_size, rng):
                u0 = z[idx]
                t = rng.integers(1, schedule.T + 1, size=len(idx))
                eps = rng.standard_normal(u0.shape)
                u_t = GeneratorService.forward_diffuse(schedule, u0, t, eps)
                inputs, emb_cache = GeneratorService._score_inputs(model, u_t, onehot[idx], t)
                pred, cache = NNService.forward(model.score_net, inputs)
                loss, upstream = NNService.loss_mse(pred, eps)
                if not np.isfinite(loss):
                    raise TrainingDivergenceError(f"score-matching loss diverged at epoch {epoch}")
                net_grads, input_grad = NNService.backward(model.score_net, cache, upstream)
                emb_grads, _ = NNService.backward(model.time_embed, emb_cache, input_grad[:, d_u + n_regions:])
                model.score_net, net_state = NNService.adam_step(model.score_net, net_grads, net_state)
                model.time_embed, emb_state = NNService.adam_step(model.time_embed, emb_grads, emb_state)
                total += loss * len(idx)
            epoch_loss = total / len(z)
            logger.debug("score network epoch %d loss %.6f", epoch, epoch_loss)

        model.final_loss = float(epoch_loss)
        model.trained = True
        logger.info("Score network trained: %d rows, %d epochs, final loss %.5f", len(z), epochs, epoch_loss)
        return model

    @staticmethod
    def predict_noise(model: DiffusionModel, u_t: np.ndarray, k: int, t: int) -> np.ndarray:
        onehot = np.zeros((len(u_t), model.n_regions))
        onehot[:, k - 1] = 1.0
        steps = np.full(len(u_t), t, dtype=np.float64)
        inputs, _ = GeneratorService._score_inputs(model, u_t, onehot, steps)
        return NNService.predict(model.score_net, inputs)

    @staticmethod
    def ancestral_sample(schedule: NoiseSchedule, noise_fn: NoiseFn, count: int, dim: int,
                         rng: np.random.Generator) -> np.ndarray:
        """Reverse-time DDPM sampling from u_T ~ N(0, I) down to u_0.

        Args:
            noise_fn: Callable (u_t, t) -> predicted noise
        """
        if count == 0:
            return np.zeros((0, dim))
        u = rng.standard_normal((count, dim))
        for t in range(schedule.T, 0, -1):
            eps = noise_fn(u, t)
            beta = schedule.betas[t - 1]
            mean = (u - beta / np.sqrt(1.0 - schedule.alpha_bars[t]) * eps) / np.sqrt(1.0 - beta)
            if t > 1:
                u = mean + np.sqrt(schedule.posterior_variance(t)) * rng.standard_normal((count, dim))
            else:
                u = mean
        return u

    @staticmethod
    def sample_latents(model: Optional[DiffusionModel], k: int, count: int, seed: int) -> np.ndarray:
        """Draw latents conditioned on region k (1-based) in the original latent units."""
        if model is None or not model.trained:
            raise StateError("diffusion model has not been trained")
        if not 1 <= k <= model.n_regions:
            raise ValueError(f"region {k} outside 1..{model.n_regions}")
        rng = np.random.default_rng(seed)

        def noise_fn(u, t):
            return GeneratorService.predict_noise(model, u, k, t)

        z = GeneratorService.ancestral_sample(model.schedule, noise_fn, count, model.latent_dim, rng)
        return z * model.latent_scale + model.latent_shift

    # Generator bundle

    @staticmethod
    def train_generator(data: Dataset, cfg, seed: int,
                        transfer: Optional[AutoencoderModel] = None) -> GeneratorModel:
        """Fit autoencoder (or reuse a frozen pretrained one) and the score network on Z_g.

        Args:
            data: Generator-training rows Z_g
            cfg: GeneratorConfig with architecture and training settings
            seed: Root seed of this generator
            transfer: Optional pretrained autoencoder, never modified
        """
        if data.n == 0:
            raise EmptyInputError("cannot train a generator on an empty split")
        task = 'classification' if data.target_kind == 'class' else 'regression'
        with_target = data.target_kind == 'continuous'

        if transfer is not None:
            expected = data.d + (1 if with_target else 0)
            if transfer.input_dim != expected or transfer.with_target != with_target:
                raise SchemaMismatchError(
                    f"pretrained autoencoder expects {transfer.input_dim} columns, data has {expected}")
            ae = transfer
            tag = 'pretrained-autoencoder'
        else:
            ae = GeneratorService.train_autoencoder(
                data, AutoencoderSpec(tuple(cfg.ae_hidden), cfg.latent_dim), cfg.ae_epochs, cfg.ae_lr,
                derive_seed(seed, 'autoencoder'), cfg.batch_size)
            tag = 'none'

        class_labels = []
        if task == 'classification':
            for k in range(1, data.n_regions + 1):
                values = data.target[data.region == k]
                if len(values):
                    uniq, counts = np.unique(values, return_counts=True)
                    class_labels.append(float(uniq[np.argmax(counts)]))
                else:
                    class_labels.append(float(k - 1))

        empty = [k for k in range(1, data.n_regions + 1) if not np.any(data.region == k)]
        if empty:
            logger.warning("Regions %s have no generator-training rows; their conditionals are untrained", empty)

        latents = GeneratorService.encode(ae, GeneratorService.joint_matrix(data, with_target))
        schedule = GeneratorService.make_schedule(cfg.timesteps, cfg.beta_min, cfg.beta_max)
        diffusion = GeneratorService.train_score_network(
            latents, data.region, schedule, ScoreNetSpec(cfg.score_depth, cfg.score_width, cfg.embed_dim),
            cfg.epochs, cfg.lr, derive_seed(seed, 'score'), n_regions=data.n_regions,
            batch_size=cfg.batch_size)

        return GeneratorModel(
            autoencoder=ae, diffusion=diffusion, task=task, n_features=data.d,
            class_labels=class_labels, transfer_tag=tag,
            metadata={'epochs': cfg.epochs, 'lr': cfg.lr, 'seed': int(seed), 'n_rows': data.n},
        )

    @staticmethod
    def allocate_counts(alpha, m: int) -> np.ndarray:
        """m_k by largest-remainder rounding of alpha_k * m."""
        a = check_simplex(alpha)
        if m < 0:
            raise ValueError(f"synthetic size must be >= 0, got {m}")
        if m == 0:
            return np.zeros(len(a), dtype=np.int64)
        return largest_remainder(a, m)

    @staticmethod
    def sample_region_rows(generator: GeneratorModel, k: int, first_chunk: int, n_chunks: int,
                           seed: int) -> np.ndarray:
        """Decoded joint rows of region k from chunks first_chunk..first_chunk+n_chunks-1.

        Each chunk draws from its own stream, so the first c rows of region k
        never depend on how many rows are requested in total.
        """
        size = Config.SYNTHESIS_CHUNK
        blocks = []
        for j in range(first_chunk, first_chunk + n_chunks):
            latents = GeneratorService.sample_latents(
                generator.diffusion, k, size, derive_seed(seed, 'region', k, 'chunk', j))
            blocks.append(GeneratorService.decode(generator.autoencoder, latents))
        if not blocks:
            return np.zeros((0, generator.autoencoder.input_dim))
        return np.vstack(blocks)

    @staticmethod
    def rows_to_dataset(generator: GeneratorModel, rows_by_region) -> Dataset:
        """Assemble synthetic rows {k: joint rows} into a Dataset of the training schema."""
        features, targets, regions = [], [], []
        for k in sorted(rows_by_region):
            rows = rows_by_region[k]
            if len(rows) == 0:
                continue
            features.append(rows[:, :generator.n_features])
            if generator.task == 'classification':
                targets.append(np.full(len(rows), generator.class_labels[k - 1]))
            else:
                targets.append(rows[:, generator.n_features])
            regions.append(np.full(len(rows), k, dtype=np.int64))
        if not features:
            return Dataset.empty(generator.n_features, generator.target_kind, generator.n_regions)
        n = sum(len(f) for f in features)
        return Dataset(features=np.vstack(features), region=np.concatenate(regions),
                       target=np.concatenate(targets), target_kind=generator.target_kind,
                       synthetic=np.ones(n, dtype=bool), n_regions=generator.n_regions)

    @staticmethod
    def synthesize(generator: GeneratorModel, alpha, m: int, seed: int) -> Dataset:
        """Generate m synthetic rows split over regions by the allocation alpha."""
        counts = GeneratorService.allocate_counts(alpha, m)
        if len(counts) != generator.n_regions:
            raise DimensionError(f"allocation has {len(counts)} entries for {generator.n_regions} regions")
        rows = {}
        for k, count in enumerate(counts, start=1):
            if count == 0:
                continue
            n_chunks = math.ceil(count / Config.SYNTHESIS_CHUNK)
            rows[k] = GeneratorService.sample_region_rows(generator, k, 0, n_chunks, seed)[:count]
        return GeneratorService.rows_to_dataset(generator, rows)

    # Checkpoints

    @staticmethod
    def save_generator(generator: GeneratorModel, path: str) -> None:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(generator.to_dict(), f, indent=2, sort_keys=True)

    @staticmethod
    def load_generator(path: str) -> GeneratorModel:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        diff = data['diffusion']
        sched = diff['schedule']
        diffusion = DiffusionModel(
            score_net=MlpParams.from_dict(diff['score_net']),
            time_embed=MlpParams.from_dict(diff['time_embed']),
            schedule=GeneratorService.make_schedule(sched['T'], sched['beta_min'], sched['beta_max']),
            n_regions=int(diff['n_regions']),
            latent_dim=int(diff['latent_dim']),
            latent_shift=np.asarray(diff['latent_shift'], dtype=np.float64),
            latent_scale=np.asarray(diff['latent_scale'], dtype=np.float64),
            final_loss=float(diff['final_loss']),
            trained=bool(diff['trained']),
        )
        return GeneratorModel(
            autoencoder=AutoencoderModel.from_dict(data['autoencoder']),
            diffusion=diffusion,
            task=data['task'],
            n_features=int(data['n_features']),
            class_labels=[float(c) for c in data['class_labels']],
            transfer_tag=data['transfer_tag'],
            metadata=data.get('metadata', {}),
        )

    @staticmethod
    def save_autoencoder(ae: AutoencoderModel, path: str) -> None:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(ae.to_dict(), f, indent=2, sort_keys=True)

    @staticmethod
    def load_autoencoder(path: str) -> AutoencoderModel:
        with open(path, 'r', encoding='utf-8') as f:
            return AutoencoderModel.from_dict(json.load(f))

"""Conditional latent diffusion generator: autoencoder, schedule, score network."""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from models.network import MlpParams

TRANSFER_TAGS = ('none', 'pretrained-autoencoder')


@dataclass(frozen=True)
class AutoencoderSpec:
    """Hidden widths shared by encoder and decoder, and latent dimension d_u."""

    hidden_sizes: Tuple[int, ...] = (256, 256, 256)
    latent_dim: int = 3


@dataclass(frozen=True)
class ScoreNetSpec:
    """Depth counts affine layers; every hidden layer has ``width`` units."""

    depth: int = 10
    width: int = 1024
    embed_dim: int = 128


@dataclass
class AutoencoderModel:
    """Deterministic encoder f and decoder g over z-scored joint rows."""

    encoder: MlpParams
    decoder: MlpParams
    latent_dim: int
    shift: np.ndarray
    scale: np.ndarray
    with_target: bool
    recon_error: float
    pretrained: bool = False

    @property
    def input_dim(self) -> int:
        return self.encoder.spec.input_dim

    def fingerprint(self) -> str:
        return self.encoder.fingerprint() + self.decoder.fingerprint()

    def to_dict(self) -> Dict[str, Any]:
        return {
            'encoder': self.encoder.to_dict(),
            'decoder': self.decoder.to_dict(),
            'latent_dim': self.latent_dim,
            'shift': self.shift.tolist(),
            'scale': self.scale.tolist(),
            'with_target': self.with_target,
            'recon_error': self.recon_error,
            'pretrained': self.pretrained,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'AutoencoderModel':
        return AutoencoderModel(
            encoder=MlpParams.from_dict(data['encoder']),
            decoder=MlpParams.from_dict(data['decoder']),
            latent_dim=int(data['latent_dim']),
            shift=np.asarray(data['shift'], dtype=np.float64),
            scale=np.asarray(data['scale'], dtype=np.float64),
            with_target=bool(data['with_target']),
            recon_error=float(data['recon_error']),
            pretrained=bool(data.get('pretrained', False)),
        )


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta grid; alpha_bars[t] = prod_{s<=t}(1 - beta_s), alpha_bars[0] = 1."""

    T: int
    beta_min: float
    beta_max: float
    betas: np.ndarray
    alpha_bars: np.ndarray

    def posterior_variance(self, t: int) -> float:
        """Variance of the reverse step from t to t-1."""
        beta = self.betas[t - 1]
        return float(beta * (1.0 - self.alpha_bars[t - 1]) / (1.0 - self.alpha_bars[t]))

    def to_dict(self) -> Dict[str, Any]:
        return {'T': self.T, 'beta_min': self.beta_min, 'beta_max': self.beta_max}


@dataclass
class DiffusionModel:
    """Noise predictor eps(u_t, zeta, t) over standardized latents."""

    score_net: MlpParams
    time_embed: MlpParams
    schedule: NoiseSchedule
    n_regions: int
    latent_dim: int
    latent_shift: np.ndarray
    latent_scale: np.ndarray
    final_loss: float = float('nan')
    trained: bool = True

    @property
    def embed_dim(self) -> int:
        return self.time_embed.spec.output_dim

    def to_dict(self) -> Dict[str, Any]:
        return {
            'score_net': self.score_net.to_dict(),
            'time_embed': self.time_embed.to_dict(),
            'schedule': self.schedule.to_dict(),
            'n_regions': self.n_regions,
            'latent_dim': self.latent_dim,
            'latent_shift': self.latent_shift.tolist(),
            'latent_scale': self.latent_scale.tolist(),
            'final_loss': self.final_loss,
            'trained': self.trained,
        }


@dataclass
class GeneratorModel:
    """Autoencoder plus conditional diffusion: realizes P(Z | Z in C_k)."""

    autoencoder: AutoencoderModel
    diffusion: DiffusionModel
    task: str
    n_features: int
    class_labels: List[float] = field(default_factory=list)
    transfer_tag: str = 'none'
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_regions(self) -> int:
        return self.diffusion.n_regions

    @property
    def target_kind(self) -> str:
        return 'class' if self.task == 'classification' else 'continuous'

    def to_dict(self) -> Dict[str, Any]:
        return {
            'autoencoder': self.autoencoder.to_dict(),
            'diffusion': self.diffusion.to_dict(),
            'task': self.task,
            'n_features': self.n_features,
            'class_labels': list(self.class_labels),
            'transfer_tag': self.transfer_tag,
            'metadata': self.metadata,
        }

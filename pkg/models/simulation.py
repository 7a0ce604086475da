"""Configurations of the two simulation studies."""
from dataclasses import dataclass


@dataclass(frozen=True)
class ClassifSimConfig:
    """Imbalanced classification: n1 rows of class 0 (minority), n2 of class 1."""

    n1: int = 1400
    n2: int = 3800
    seed: int = 0

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError(f"class counts must be >= 1, got n1={self.n1}, n2={self.n2}")


@dataclass(frozen=True)
class RegressSimConfig:
    """Regime-switching regression: n1 rows in the undersampled region, n2 in the other."""

    n1: int = 1400
    n2: int = 3800
    sigma: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0:
            raise ValueError("region counts must be non-negative")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

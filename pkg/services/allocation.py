"""Simplex checks and largest-remainder rounding."""
import numpy as np

from models.errors import SimplexError

SIMPLEX_TOL = 1e-9


def check_simplex(alpha) -> np.ndarray:
    """Return alpha as an array, raising SimplexError off the simplex."""
    a = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if a.size == 0 or np.any(a < -SIMPLEX_TOL) or abs(a.sum() - 1.0) > SIMPLEX_TOL:
        raise SimplexError(f"allocation {a.tolist()} is not on the probability simplex")
    return np.clip(a, 0.0, None)


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer counts proportional to weights that sum exactly to total.

    Leftover units go to the largest fractional parts; ties favour the
    smaller index.
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    total = int(total)
    if total < 0:
        raise ValueError(f"total must be >= 0, got {total}")
    if w.sum() <= 0:
        raise ValueError("weights must have a positive sum")
    exact = w / w.sum() * total
    counts = np.floor(exact + 1e-9).astype(np.int64)
    counts = np.minimum(counts, total)
    leftover = total - int(counts.sum())
    fractions = exact - counts
    order = np.argsort(-fractions, kind='stable')
    if leftover > 0:
        counts[order[:leftover]] += 1
    elif leftover < 0:
        for i in order[::-1]:
            if leftover == 0:
                break
            if counts[i] > 0:
                counts[i] -= 1
                leftover += 1
    return counts

"""Linear exponential-family model descriptions.

Every sampler in this package works against the same shape of target: an
unnormalized density exp(<S(x), theta>) over a finite state space, with a flat
prior on a coordinate box for theta.  An ``EnergyModel`` bundles the box, the
observed sufficient statistics, and a tag naming the concrete family.  Thetas
and statistics are plain float64 numpy vectors of equal length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["EnergyModel", "energy_dot", "log_prior"]


def _frozen_vector(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EnergyModel:
    """A linear-exponent target on a finite space with a box prior on theta.

    ``lower`` and ``upper`` bound the open prior box, one entry per theta
    coordinate; ``observed_stats`` holds S(x0) for the data the posterior
    conditions on.  Instances are immutable and safe to share across chains.
    """

    lower: np.ndarray
    upper: np.ndarray
    observed_stats: np.ndarray
    kind: str = "custom"
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen_vector(self.lower))
        object.__setattr__(self, "upper", _frozen_vector(self.upper))
        object.__setattr__(self, "observed_stats", _frozen_vector(self.observed_stats))
        if self.lower.shape != self.upper.shape:
            raise ValueError("prior box bounds have mismatched shapes")
        if self.observed_stats.shape != self.lower.shape:
            raise ValueError(
                "observed statistics dimension %d does not match box dimension %d"
                % (self.observed_stats.size, self.lower.size)
            )
        if not np.all(np.isfinite(self.lower)) or not np.all(np.isfinite(self.upper)):
            raise ValueError("prior box bounds must be finite")
        if not np.all(self.lower < self.upper):
            raise ValueError("prior box must have lower < upper in every coordinate")
        if not np.all(np.isfinite(self.observed_stats)):
            raise ValueError("observed statistics must be finite")

    @property
    def stat_dim(self) -> int:
        return self.observed_stats.size

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, theta: np.ndarray) -> bool:
        """Strict membership in the open prior box."""
        theta = np.asarray(theta, dtype=np.float64)
        return bool(np.all(theta > self.lower) and np.all(theta < self.upper))


def energy_dot(stats: np.ndarray, theta: np.ndarray) -> float:
    """Inner product <S(x), theta>, the log of the unnormalized likelihood.

    Raises ValueError when the two vectors disagree in length.
    """
    stats = np.asarray(stats, dtype=np.float64).reshape(-1)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if stats.size != theta.size:
        raise ValueError(
            "statistics dimension %d does not match theta dimension %d"
            % (stats.size, theta.size)
        )
    return float(stats @ theta)


def log_prior(model: EnergyModel, theta: np.ndarray) -> float:
    """Log of the flat box prior: 0.0 inside the open box, -inf outside."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.size != model.lower.size:
        raise ValueError(
            "theta dimension %d does not match box dimension %d"
            % (theta.size, model.lower.size)
        )
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    if model.contains(theta):
        return 0.0
    return float("-inf")

"""Brute-force references for small instances.

Everything here is deliberately independent of the sampler machinery: state
spaces are enumerated outright, normalizers are exact sums, and posterior
summaries come from deterministic quadrature.  Tests and the validation
suite compare the adaptive machinery against these numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import logsumexp

from .model import EnergyModel
from .models.ergm import _stats_core

MAX_ENUM_STATES = 1 << 20

__all__ = [
    "MAX_ENUM_STATES",
    "EnumerableInstance",
    "ExactSurface",
    "QuadratureResult",
    "exact_posterior",
    "fd_gradient_error",
]


@njit(cache=True)
def _ising_bond_sums(rows, cols):
    size = rows * cols
    total = 1 << size
    out = np.empty(total, np.int64)
    for idx in range(total):
        s = 0
        for r in range(rows):
            for c in range(cols):
                k = r * cols + c
                sk = 1 if (idx >> k) & 1 else -1
                if c + 1 < cols:
                    k2 = k + 1
                    s2 = 1 if (idx >> k2) & 1 else -1
                    s += sk * s2
                if r + 1 < rows:
                    k2 = k + cols
                    s2 = 1 if (idx >> k2) & 1 else -1
                    s += sk * s2
        out[idx] = s
    return out


@njit(cache=True)
def _ergm_all_stats(n, literal):
    m = n * (n - 1) // 2
    total = 1 << m
    out = np.empty((total, 4), np.float64)
    adj = np.zeros((n, n), np.int8)
    for idx in range(total):
        k = 0
        for i in range(n - 1):
            for j in range(i + 1, n):
                v = (idx >> k) & 1
                adj[i, j] = v
                adj[j, i] = v
                k += 1
        s1, s2, s3, s4 = _stats_core(adj, literal)
        out[idx, 0] = s1
        out[idx, 1] = s2
        out[idx, 2] = s3
        out[idx, 3] = s4
    return out


@dataclass(frozen=True)
class EnumerableInstance:
    """Statistic multiset of a fully enumerated state space.

    ``stats`` holds the distinct statistic vectors, ``log_counts`` the log
    multiplicity of each, so exact normalizers and moments are plain
    log-sum-exp reductions over a few dozen rows.
    """

    stats: np.ndarray
    log_counts: np.ndarray
    n_states: int
    kind: str = "custom"

    def __post_init__(self):
        stats = np.ascontiguousarray(self.stats, dtype=np.float64)
        if stats.ndim == 1:
            stats = stats[:, None]
        object.__setattr__(self, "stats", stats)
        object.__setattr__(
            self, "log_counts", np.asarray(self.log_counts, dtype=np.float64)
        )
        if self.stats.shape[0] != self.log_counts.shape[0]:
            raise ValueError("stats and log_counts disagree in length")

    @property
    def stat_dim(self) -> int:
        return self.stats.shape[1]

    @classmethod
    def from_raw_stats(cls, raw: np.ndarray, kind: str = "custom") -> "EnumerableInstance":
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim == 1:
            raw = raw[:, None]
        uniq, counts = np.unique(raw, axis=0, return_counts=True)
        return cls(uniq, np.log(counts), raw.shape[0], kind)

    @classmethod
    def ising(cls, rows: int, cols: int) -> "EnumerableInstance":
        size = rows * cols
        if 2 ** size > MAX_ENUM_STATES:
            raise ValueError(
                "cannot enumerate %dx%d lattice: 2^%d states" % (rows, cols, size)
            )
        sums = _ising_bond_sums(rows, cols)
        return cls.from_raw_stats(sums.astype(np.float64), kind="ising")

    @classmethod
    def ergm(cls, n_actors: int, variant: str = "literal") -> "EnumerableInstance":
        m = n_actors * (n_actors - 1) // 2
        if 2 ** m > MAX_ENUM_STATES:
            raise ValueError(
                "cannot enumerate %d-actor graphs: 2^%d states" % (n_actors, m)
            )
        if variant not in ("literal", "standard"):
            raise ValueError("unknown statistic variant %r" % (variant,))
        raw = _ergm_all_stats(n_actors, variant == "literal")
        return cls.from_raw_stats(raw, kind="ergm")

    def exact_log_z(self, theta) -> float:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.stat_dim:
            raise ValueError("theta dimension mismatch")
        return float(logsumexp(self.stats @ theta + self.log_counts))

    def exact_log_z_many(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        return logsumexp(thetas @ self.stats.T + self.log_counts, axis=1)

    def exact_mean_stats(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        logits = self.stats @ theta + self.log_counts
        w = np.exp(logits - logits.max())
        w /= w.sum()
        return w @ self.stats


class ExactSurface:
    """Drop-in replacement for the learned surface using exact normalizers."""

    def __init__(self, instance: EnumerableInstance):
        self.instance = instance

    def log_z(self, theta) -> float:
        return self.instance.exact_log_z(theta)

    def log_z_many(self, thetas) -> np.ndarray:
        return self.instance.exact_log_z_many(thetas)


def fd_gradient_error(instance: EnumerableInstance, theta, step: float = 1e-5) -> float:
    """Worst-coordinate gap between the finite-difference gradient of the
    exact log normalizer and the exact mean statistics (they must agree)."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    q = instance.stat_dim
    grad = np.empty(q)
    for k in range(q):
        e = np.zeros(q)
        e[k] = step
        grad[k] = (
            instance.exact_log_z(theta + e) - instance.exact_log_z(theta - e)
        ) / (2.0 * step)
    return float(np.max(np.abs(grad - instance.exact_mean_stats(theta))))


@dataclass
class QuadratureResult:
    mean: np.ndarray
    quantiles: dict = field(default_factory=dict)
    log_norm: float = 0.0
    grid_size: int = 0
    rounds: int = 0


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    h = grid[1] - grid[0]
    w = np.full(grid.size, h)
    w[0] = w[-1] = h / 2.0
    return w


def _cdf_from_density(grid: np.ndarray, dens: np.ndarray) -> np.ndarray:
    seg = 0.5 * (dens[:-1] + dens[1:]) * np.diff(grid)
    cdf = np.concatenate(([0.0], np.cumsum(seg)))
    return cdf / cdf[-1]


def exact_posterior(
    model: EnergyModel,
    instance: EnumerableInstance | None,
    probs=(0.025, 0.5, 0.975),
    tol: float = 1e-6,
    start: int = 65,
    max_rounds: int = 14,
    prior_only: bool = False,
) -> QuadratureResult:
    """Posterior mean and marginal quantiles by trapezoid quadrature over the
    prior box, doubling the grid until the mean moves by less than ``tol``.

    Supports one- and two-dimensional parameters.  ``prior_only`` drops the
    data term, leaving the flat prior (a quadrature sanity mode: the mean is
    the box center).
    """
    q = model.stat_dim
    if q not in (1, 2):
        raise ValueError("quadrature supports 1- or 2-dimensional parameters")
    if not prior_only and instance is None:
        raise ValueError("need an enumerated instance unless prior_only")
    observed = model.observed_stats
    lo, hi = model.lower, model.upper
    # grid doubling stops at these sizes regardless of tol, to bound memory
    max_grid = 2**21 + 1 if q == 1 else 2049

    def log_posterior(th):
        if prior_only:
            return np.zeros(th.shape[0])
        return th @ observed - instance.exact_log_z_many(th)

    def log_f(grid_axes):
        if q == 1:
            return log_posterior(grid_axes[0][:, None])
        a0, a1 = grid_axes
        out = np.empty((a0.size, a1.size))
        row = np.empty((a1.size, 2))
        row[:, 1] = a1
        for i in range(a0.size):  # row at a time keeps intermediates small
            row[:, 0] = a0[i]
            out[i] = log_posterior(row)
        return out

    g = start
    prev_mean = None
    result = None
    for rounds in range(1, max_rounds + 1):
        axes = [np.linspace(lo[k], hi[k], g) for k in range(q)]
        lf = log_f(axes)
        shift = lf.max()
        f = np.exp(lf - shift)
        ws = [_trapezoid_weights(a) for a in axes]
        if q == 1:
            mass = float(ws[0] @ f)
            mean = np.array([float(ws[0] @ (f * axes[0])) / mass])
            marginals = [f]
        else:
            wf = f * ws[0][:, None] * ws[1][None, :]
            mass = float(wf.sum())
            mean = np.array(
                [
                    float((wf.sum(axis=1) * axes[0]).sum()) / mass,
                    float((wf.sum(axis=0) * axes[1]).sum()) / mass,
                ]
            )
            marginals = [f @ ws[1], ws[0] @ f]
        quantiles = {}
        for p in probs:
            vals = np.empty(q)
            for k in range(q):
                cdf = _cdf_from_density(axes[k], marginals[k])
                vals[k] = np.interp(p, cdf, axes[k])
            quantiles[float(p)] = vals
        result = QuadratureResult(
            mean=mean,
            quantiles=quantiles,
            log_norm=float(shift + np.log(mass)),
            grid_size=g,
            rounds=rounds,
        )
        if prev_mean is not None and np.max(np.abs(mean - prev_mean)) < tol:
            return result
        prev_mean = mean
        if 2 * (g - 1) + 1 > max_grid:
            return result
        g = 2 * (g - 1) + 1
    return result

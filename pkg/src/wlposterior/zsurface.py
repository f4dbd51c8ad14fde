"""Kernel-smoothed estimate of the normalizing-constant surface.

The weight vector c learned by the Wang-Landau chain pins down log Z at the
particles only.  To evaluate at an arbitrary theta, each particle contributes
exp(c(i)) times an importance ratio estimated from the chain's own history:
the average of exp(<S(x), theta - theta^(i)>) over the states recorded while
the chain carried label i.  Contributions are blended with a normalized
Gaussian similarity kernel in theta.  Labels that were never visited
contribute nothing (the 0/0 convention), and the kernel weights are not
renormalized over the visited subset.

Sufficient statistics for the bundled models are small integer vectors, so the
store keeps a per-label multiset (distinct value, count) instead of a flat
list.  That representation is exact and keeps surface evaluation cheap even
after millions of recorded sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .wl import ParticleSet

__all__ = [
    "SmoothingKernel",
    "SampleStore",
    "ZEstimate",
    "kappa_weights",
    "kappa_log_weights",
    "nearest_neighbor_bandwidth",
]


@dataclass(frozen=True)
class SmoothingKernel:
    """Gaussian similarity kernel exp(-||theta - theta_i||^2 / (2 h^2))."""

    bandwidth: float

    def __post_init__(self):
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0.0:
            raise ValueError("bandwidth must be positive and finite")


def nearest_neighbor_bandwidth(particles: ParticleSet) -> float:
    """Default bandwidth: median nearest-neighbor distance among particles.

    A single particle has no neighbor; the kernel weight is then identically
    one, so any positive value works and 1.0 is returned.
    """
    pts = particles.points
    d = pts.shape[0]
    if d < 2:
        return 1.0
    diff = pts[:, None, :] - pts[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(dist2, np.inf)
    nn = np.sqrt(dist2.min(axis=1))
    return float(np.median(nn))


def kappa_log_weights(
    theta: np.ndarray, particles: ParticleSet, kernel: SmoothingKernel
) -> np.ndarray:
    """Log of the normalized kernel weights over all particles."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    diff = particles.points - theta
    a = -np.einsum("ij,ij->i", diff, diff) / (2.0 * kernel.bandwidth**2)
    m = a.max()
    log_norm = m + np.log(np.exp(a - m).sum())
    return a - log_norm


def kappa_weights(
    theta: np.ndarray, particles: ParticleSet, kernel: SmoothingKernel
) -> np.ndarray:
    """Normalized kernel weights; sums to one over the full particle set."""
    return np.exp(kappa_log_weights(theta, particles, kernel))


class SampleStore:
    """Per-label history of sufficient statistics from the auxiliary chain.

    ``record`` counts every call in ``visits``; with a thinning stride s only
    every s-th record per label is kept (the first is always kept).  Stored
    samples are aggregated by distinct statistic value, which is lossless for
    evaluation because only sums of exp(<S, .>) over the history are ever
    needed.
    """

    _GROW = 8

    def __init__(self, n_labels: int, stat_dim: int, stride: int = 1):
        if n_labels < 1 or stat_dim < 1:
            raise ValueError("need at least one label and one statistic")
        if stride < 1:
            raise ValueError("stride must be a positive integer")
        self.n_labels = int(n_labels)
        self.stat_dim = int(stat_dim)
        self.stride = int(stride)
        self.visits = np.zeros(n_labels, dtype=np.int64)
        self.stored = np.zeros(n_labels, dtype=np.int64)
        self._index: list[dict] = [dict() for _ in range(n_labels)]
        self._vals: list[np.ndarray] = [
            np.empty((self._GROW, stat_dim)) for _ in range(n_labels)
        ]
        self._cnts: list[np.ndarray] = [
            np.zeros(self._GROW) for _ in range(n_labels)
        ]
        self._nrows = np.zeros(n_labels, dtype=np.int64)

    def record(self, label: int, stats: np.ndarray) -> None:
        seen = self.visits[label]
        self.visits[label] = seen + 1
        if seen % self.stride:
            return
        stats = np.asarray(stats, dtype=np.float64).reshape(-1)
        if stats.size != self.stat_dim:
            raise ValueError("statistics dimension does not match the store")
        key = tuple(stats.tolist())
        idx = self._index[label].get(key)
        if idx is None:
            n = int(self._nrows[label])
            vals = self._vals[label]
            if n == vals.shape[0]:
                grown_v = np.empty((2 * n, self.stat_dim))
                grown_v[:n] = vals
                self._vals[label] = grown_v
                grown_c = np.zeros(2 * n)
                grown_c[:n] = self._cnts[label]
                self._cnts[label] = grown_c
            self._vals[label][n] = stats
            self._cnts[label][n] = 1.0
            self._index[label][key] = n
            self._nrows[label] = n + 1
        else:
            self._cnts[label][idx] += 1.0
        self.stored[label] += 1

    def stored_count(self, label: int) -> int:
        """Number of stored (post-thinning) samples for a label."""
        return int(self.stored[label])

    def snapshot(
        self, particles: ParticleSet, log_weights: np.ndarray, kernel: SmoothingKernel
    ) -> "ZEstimate":
        """Freeze the current history, weights, and kernel into a ZEstimate."""
        d = self.n_labels
        offsets = np.zeros(d + 1, dtype=np.int64)
        vals_parts = []
        base_parts = []
        pts = particles.points
        for i in range(d):
            n = int(self._nrows[i])
            offsets[i + 1] = offsets[i] + n
            if n:
                v = self._vals[i][:n]
                c = self._cnts[i][:n]
                vals_parts.append(v)
                base_parts.append(np.log(c) - v @ pts[i])
        if vals_parts:
            vals = np.concatenate(vals_parts)
            base = np.concatenate(base_parts)
        else:
            vals = np.empty((0, self.stat_dim))
            base = np.empty(0)
        return ZEstimate(
            particles,
            kernel,
            np.array(log_weights, dtype=np.float64, copy=True),
            vals,
            base,
            offsets,
            self.stored.copy(),
            self.visits.copy(),
        )

    def state_dict(self) -> dict:
        return {
            "n_labels": self.n_labels,
            "stat_dim": self.stat_dim,
            "stride": self.stride,
            "visits": self.visits.copy(),
            "stored": self.stored.copy(),
            "vals": [self._vals[i][: self._nrows[i]].copy() for i in range(self.n_labels)],
            "cnts": [self._cnts[i][: self._nrows[i]].copy() for i in range(self.n_labels)],
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "SampleStore":
        store = cls(state["n_labels"], state["stat_dim"], state["stride"])
        store.visits[:] = state["visits"]
        store.stored[:] = state["stored"]
        for i in range(store.n_labels):
            vals = state["vals"][i]
            cnts = state["cnts"][i]
            n = vals.shape[0]
            cap = max(cls._GROW, n)
            store._vals[i] = np.empty((cap, store.stat_dim))
            store._vals[i][:n] = vals
            store._cnts[i] = np.zeros(cap)
            store._cnts[i][:n] = cnts
            store._nrows[i] = n
            store._index[i] = {
                tuple(vals[r].tolist()): r for r in range(n)
            }
        return store


@njit(cache=True)
def _log_z_eval(vals, base, offsets, log_stored, c, log_kappa, theta):
    d = offsets.size - 1
    k = theta.size
    n_rows = vals.shape[0]
    dots = np.empty(n_rows)
    logits = np.empty(d)
    for i in range(d):
        s0 = offsets[i]
        s1 = offsets[i + 1]
        if s1 == s0:
            logits[i] = -np.inf
            continue
        m = -np.inf
        for r in range(s0, s1):
            t = base[r]
            for j in range(k):
                t += vals[r, j] * theta[j]
            dots[r] = t
            if t > m:
                m = t
        acc = 0.0
        for r in range(s0, s1):
            acc += np.exp(dots[r] - m)
        log_v = m + np.log(acc) - log_stored[i]
        logits[i] = log_kappa[i] + c[i] + log_v
    best = -np.inf
    for i in range(d):
        if logits[i] > best:
            best = logits[i]
    if best == -np.inf:
        return -np.inf
    acc = 0.0
    for i in range(d):
        if logits[i] > -np.inf:
            acc += np.exp(logits[i] - best)
    return best + np.log(acc)


class ZEstimate:
    """Immutable snapshot of the smoothed log-partition surface.

    Built by ``SampleStore.snapshot``; evaluation is a pure function of the
    snapshot, so instances can be shared freely.  ``log_z`` raises when the
    store held no samples at all, since the surface is undefined then.
    """

    def __init__(
        self, particles, kernel, c, vals, base, offsets, stored, visits
    ):
        self.particles = particles
        self.kernel = kernel
        self.c = c
        self._vals = vals
        self._base = base
        self._offsets = offsets
        self.stored = stored
        self.visits = visits
        with np.errstate(divide="ignore"):
            self._log_stored = np.where(
                stored > 0, np.log(np.maximum(stored, 1).astype(np.float64)), 0.0
            )
        self._any_visited = bool((stored > 0).any())

    def log_z(self, theta: np.ndarray) -> float:
        if not self._any_visited:
            raise RuntimeError(
                "surface is undefined: no label has any recorded samples"
            )
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.particles.dim:
            raise ValueError("theta dimension does not match the particles")
        log_kappa = kappa_log_weights(theta, self.particles, self.kernel)
        return float(
            _log_z_eval(
                self._vals,
                self._base,
                self._offsets,
                self._log_stored,
                self.c,
                log_kappa,
                theta,
            )
        )

    def log_z_many(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=np.float64)
        if thetas.ndim == 1:
            thetas = thetas[:, None]
        return np.array([self.log_z(t) for t in thetas])

    def importance_ratio(self, label: int, theta: np.ndarray) -> float:
        """Average of exp(<S, theta - theta^(label)>) over the stored samples
        of one label; 0.0 when the label holds no samples."""
        s0 = int(self._offsets[label])
        s1 = int(self._offsets[label + 1])
        if s1 == s0:
            return 0.0
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        delta = theta - self.particles.points[label]
        dots = self._vals[s0:s1] @ delta
        if not dots.any():
            return 1.0  # theta coincides with the particle: exponent is 0
        w = dots + self._base[s0:s1] + (
            self._vals[s0:s1] @ self.particles.points[label]
        )  # log count + <S, theta - theta_i>
        m = w.max()
        return float(np.exp(m + np.log(np.exp(w - m).sum()) - self._log_stored[label]))

    def omega(self) -> np.ndarray:
        """Normalized weights exp(c) / sum(exp(c)), a convergence diagnostic."""
        e = np.exp(self.c - self.c.max())
        return e / e.sum()

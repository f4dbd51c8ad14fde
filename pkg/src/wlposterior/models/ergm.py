"""Exponential random graph model with four statistics on undirected graphs.

Graphs are symmetric 0/1 adjacency matrices with a zero diagonal.  Two
variants of the statistic vector are supported and selected by name:

``literal``
    Index-restricted sums: edges; pairs i<j<k with both (i,k) and (j,k)
    present; quadruples i<j<k<l with (i,l), (j,l), (k,l) present; and
    triangles.  The middle two only count configurations whose center is the
    highest-numbered vertex, so they depend on the vertex numbering.

``standard``
    The usual label-free counts: edges, two-stars, three-stars, triangles.

Both share edge and triangle counts; they differ in the star terms.  The
dyad-flip kernel updates each pair in turn from its full conditional using
O(n) change statistics.
"""

from __future__ import annotations

from importlib import resources

import numpy as np
from numba import njit

from ..model import EnergyModel

__all__ = [
    "STAT_VARIANTS",
    "ergm_stats",
    "ergm_change_stats",
    "ergm_flip_sweep",
    "ErgmKernel",
    "ergm_model",
    "load_edge_list",
    "florentine_business",
]

STAT_VARIANTS = ("literal", "standard")


def _check_adjacency(adj: np.ndarray) -> np.ndarray:
    adj = np.asarray(adj)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(np.diag(adj) != 0):
        raise ValueError("adjacency must have a zero diagonal")
    if np.any(adj != adj.T):
        raise ValueError("adjacency must be symmetric")
    if np.any((adj != 0) & (adj != 1)):
        raise ValueError("adjacency entries must be 0 or 1")
    return adj


def _variant_code(variant: str) -> int:
    if variant not in STAT_VARIANTS:
        raise ValueError("unknown statistic variant %r" % (variant,))
    return 0 if variant == "literal" else 1


@njit(cache=True)
def _stats_core(adj, literal):
    n = adj.shape[0]
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    s4 = 0.0
    for j in range(n):
        if literal:
            b = 0  # neighbors of j with smaller index
            for x in range(j):
                b += adj[x, j]
            s2 += b * (b - 1) / 2.0
            s3 += b * (b - 1) * (b - 2) / 6.0
        else:
            deg = 0
            for x in range(n):
                deg += adj[x, j]
            s2 += deg * (deg - 1) / 2.0
            s3 += deg * (deg - 1) * (deg - 2) / 6.0
    for i in range(n):
        for j in range(i + 1, n):
            if adj[i, j]:
                s1 += 1.0
                for k in range(j + 1, n):
                    if adj[i, k] and adj[j, k]:
                        s4 += 1.0
    return s1, s2, s3, s4


def ergm_stats(adj: np.ndarray, variant: str = "literal") -> np.ndarray:
    """Four-statistic vector (edges, star-like 2nd, star-like 3rd, triangles)."""
    adj = np.ascontiguousarray(_check_adjacency(adj), dtype=np.int8)
    literal = _variant_code(variant) == 0
    return np.array(_stats_core(adj, literal))


@njit(cache=True)
def _change_core(adj, i, j, literal):
    # change in each statistic from adding edge (i, j) to a graph without it
    n = adj.shape[0]
    d1 = 1.0
    if literal:
        lo = i if i < j else j
        hi = j if i < j else i
        b = 0  # smaller-index neighbors of the higher endpoint
        for x in range(hi):
            if x != lo:
                b += adj[x, hi]
        d2 = float(b)
        d3 = b * (b - 1) / 2.0
    else:
        di = 0
        dj = 0
        for x in range(n):
            di += adj[x, i]
            dj += adj[x, j]
        d2 = float(di + dj)
        d3 = di * (di - 1) / 2.0 + dj * (dj - 1) / 2.0
    com = 0
    for x in range(n):
        com += adj[x, i] * adj[x, j]
    d4 = float(com)
    return d1, d2, d3, d4


def ergm_change_stats(
    adj: np.ndarray, i: int, j: int, variant: str = "literal"
) -> np.ndarray:
    """S(graph with edge ij) - S(graph without it), ignoring the current
    state of that edge."""
    if i == j:
        raise ValueError("change statistics need a dyad, not a self-pair")
    work = np.ascontiguousarray(_check_adjacency(adj), dtype=np.int8).copy()
    work[i, j] = 0
    work[j, i] = 0
    literal = _variant_code(variant) == 0
    return np.array(_change_core(work, i, j, literal))


@njit(cache=True)
def _dyad_sweep(adj, theta, u, literal):
    n = adj.shape[0]
    k = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            adj[i, j] = 0
            adj[j, i] = 0
            d1, d2, d3, d4 = _change_core(adj, i, j, literal)
            lo = theta[0] * d1 + theta[1] * d2 + theta[2] * d3 + theta[3] * d4
            p_edge = 1.0 / (1.0 + np.exp(-lo))
            v = 1 if u[k] < p_edge else 0
            adj[i, j] = v
            adj[j, i] = v
            k += 1


def ergm_flip_sweep(
    adj: np.ndarray, theta: np.ndarray, rng, variant: str = "literal"
) -> np.ndarray:
    """One systematic pass over all dyads, each redrawn from its full
    conditional p(edge | rest) = logistic(<theta, change stats>).
    Mutates and returns ``adj``."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.size != 4:
        raise ValueError("theta must have four entries")
    adj = np.ascontiguousarray(adj, dtype=np.int8)
    n = adj.shape[0]
    u = rng.random(n * (n - 1) // 2)
    _dyad_sweep(adj, theta, u, _variant_code(variant) == 0)
    return adj


@njit(cache=True)
def _wl_sweep(adj, theta_row, u_flat, flag):
    _dyad_sweep(adj, theta_row, u_flat, flag == 0)


@njit(cache=True)
def _wl_stats(adj, out, flag):
    s1, s2, s3, s4 = _stats_core(adj, flag == 0)
    out[0] = s1
    out[1] = s2
    out[2] = s3
    out[3] = s4


class ErgmKernel:
    """Dyad-sweep kernel adapter for the weight-learning chain."""

    def __init__(self, n_actors: int, variant: str = "literal", sweeps_per_step: int = 1):
        if n_actors < 2:
            raise ValueError("need at least two actors")
        _variant_code(variant)
        self.n_actors = int(n_actors)
        self.variant = variant
        self.sweeps_per_step = int(sweeps_per_step)

    def initial_state(self, rng) -> np.ndarray:
        return np.zeros((self.n_actors, self.n_actors), dtype=np.int8)

    def sweep(self, state: np.ndarray, theta_point: np.ndarray, rng) -> np.ndarray:
        theta = np.asarray(theta_point, dtype=np.float64).reshape(-1)
        literal = _variant_code(self.variant) == 0
        n = state.shape[0]
        for _ in range(self.sweeps_per_step):
            u = rng.random(n * (n - 1) // 2)
            _dyad_sweep(state, theta, u, literal)
        return state

    def stats(self, state: np.ndarray) -> np.ndarray:
        literal = _variant_code(self.variant) == 0
        return np.array(_stats_core(state, literal))

    def fast_spec(self):
        """Numba hooks for the batched weight-learning loop."""
        n = self.n_actors
        return (
            _wl_sweep,
            _wl_stats,
            _variant_code(self.variant),
            n * (n - 1) // 2,
            self.sweeps_per_step,
        )


def ergm_model(
    adj: np.ndarray, variant: str = "literal", half_width: float = 50.0
) -> EnergyModel:
    """ERGM target with a symmetric box prior on the four coefficients."""
    stats = ergm_stats(adj, variant)
    return EnergyModel(
        lower=-half_width * np.ones(4),
        upper=half_width * np.ones(4),
        observed_stats=stats,
        kind="ergm",
        extra={"n_actors": int(adj.shape[0]), "variant": variant},
    )


def load_edge_list(path) -> np.ndarray:
    """Read an undirected edge list: optional leading comment lines (#), then
    a line with the node count, then one '1-based i j' pair per line.
    Errors carry the offending line number."""
    n = None
    adj = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if n is None:
                if len(parts) != 1:
                    raise ValueError(
                        "%s:%d: expected the node count, got %r" % (path, lineno, line)
                    )
                try:
                    n = int(parts[0])
                except ValueError:
                    raise ValueError(
                        "%s:%d: node count is not an integer: %r"
                        % (path, lineno, line)
                    ) from None
                if n < 1:
                    raise ValueError("%s:%d: node count must be positive" % (path, lineno))
                adj = np.zeros((n, n), dtype=np.int8)
                continue
            if len(parts) != 2:
                raise ValueError(
                    "%s:%d: expected an 'i j' pair, got %r" % (path, lineno, line)
                )
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(
                    "%s:%d: edge endpoints are not integers: %r"
                    % (path, lineno, line)
                ) from None
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(
                    "%s:%d: endpoint out of range 1..%d: %r" % (path, lineno, n, line)
                )
            if i == j:
                raise ValueError("%s:%d: self-loop %d %d" % (path, lineno, i, j))
            adj[i - 1, j - 1] = 1
            adj[j - 1, i - 1] = 1
    if n is None:
        raise ValueError("%s: missing node count" % (path,))
    return adj


def florentine_business() -> np.ndarray:
    """Adjacency matrix of the bundled Florentine business-ties network."""
    ref = resources.files(__package__).joinpath("data/florentine_business.txt")
    with resources.as_file(ref) as path:
        return load_edge_list(path)

"""Ising model on a rectangular lattice with free boundaries.

States are int8 arrays of +1/-1 spins.  The sufficient statistic is the sum
of products over nearest-neighbor pairs, so the unnormalized density at
inverse-temperature-like parameter theta is exp(theta * bond_sum(x)).

Two samplers live here: a systematic heat-bath sweep (the kernel the weight
learner uses) and a perfect sampler.  The perfect sampler runs the classic
monotone coupling-from-the-past construction: chains started from the all-up
and all-down configurations are driven by shared uniforms from increasingly
early times, doubling the horizon and reusing randomness until they coalesce.
For theta >= 0 the heat-bath update is monotone in the neighbor sum, so the
two extreme chains sandwich every trajectory; coalescence therefore yields an
exact draw from the stationary law.  The sandwich property is asserted after
every sweep and a violation raises immediately.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..model import EnergyModel

__all__ = [
    "bond_sum",
    "ising_stat",
    "random_lattice",
    "ising_heatbath_sweep",
    "cftp_sample",
    "IsingKernel",
    "ising_model",
    "save_pgm",
]


@njit(cache=True)
def _bond_sum(spins):
    m, n = spins.shape
    total = 0
    for i in range(m):
        for j in range(n - 1):
            total += spins[i, j] * spins[i, j + 1]
    for i in range(m - 1):
        for j in range(n):
            total += spins[i, j] * spins[i + 1, j]
    return total


@njit(cache=True)
def _heatbath_sweep(spins, theta, u):
    m, n = spins.shape
    for i in range(m):
        for j in range(n):
            s = 0
            if i > 0:
                s += spins[i - 1, j]
            if i < m - 1:
                s += spins[i + 1, j]
            if j > 0:
                s += spins[i, j - 1]
            if j < n - 1:
                s += spins[i, j + 1]
            p_up = 1.0 / (1.0 + np.exp(-2.0 * theta * s))
            spins[i, j] = 1 if u[i, j] < p_up else -1


def bond_sum(spins: np.ndarray) -> int:
    """Sum of nearest-neighbor spin products (free boundary)."""
    spins = np.ascontiguousarray(spins, dtype=np.int8)
    return int(_bond_sum(spins))


def ising_stat(spins: np.ndarray) -> np.ndarray:
    """Sufficient statistic as a length-1 float vector."""
    return np.array([float(bond_sum(spins))])


def random_lattice(rows: int, cols: int, rng) -> np.ndarray:
    return np.where(rng.random((rows, cols)) < 0.5, 1, -1).astype(np.int8)


def ising_heatbath_sweep(spins: np.ndarray, theta: float, rng) -> np.ndarray:
    """One systematic raster sweep of single-site heat-bath updates.

    Each site is set to +1 with probability 1 / (1 + exp(-2 theta s)) where s
    sums the current values of its neighbors.  Mutates and returns ``spins``.
    """
    u = rng.random(spins.shape)
    _heatbath_sweep(spins, float(theta), u)
    return spins


def cftp_sample(
    rows: int,
    cols: int,
    theta: float,
    rng,
    t_max: int = 1 << 20,
    return_info: bool = False,
):
    """Exact draw from the Ising law by monotone coupling from the past.

    theta must be nonnegative (monotonicity fails otherwise); theta == 0 is
    allowed and coalesces after a single sweep.  Raises RuntimeError if the
    extreme chains have not coalesced after t_max sweeps of history.
    """
    theta = float(theta)
    if theta < 0.0:
        raise ValueError("perfect sampling requires theta >= 0")
    slices: list[np.ndarray] = []
    horizon = 1
    sweeps_done = 0
    while horizon <= t_max:
        while len(slices) < horizon:
            slices.append(rng.random((rows, cols)))
        top = np.ones((rows, cols), dtype=np.int8)
        bottom = -np.ones((rows, cols), dtype=np.int8)
        merged = False
        for k in range(horizon - 1, -1, -1):
            u = slices[k]
            _heatbath_sweep(top, theta, u)
            sweeps_done += 1
            if not merged:
                _heatbath_sweep(bottom, theta, u)
                sweeps_done += 1
                if not np.all(top >= bottom):
                    raise RuntimeError(
                        "monotone sandwich violated at theta=%g on %dx%d"
                        % (theta, rows, cols)
                    )
                if np.array_equal(top, bottom):
                    merged = True
        if merged:
            if return_info:
                return top, {"horizon": horizon, "sweeps": sweeps_done}
            return top
        horizon *= 2
    raise RuntimeError(
        "no coalescence within %d sweeps of history at theta=%g on %dx%d"
        % (t_max, theta, rows, cols)
    )


@njit(cache=True)
def _wl_sweep(x, theta_row, u_flat, flag):
    _heatbath_sweep(x, theta_row[0], u_flat.reshape(x.shape))


@njit(cache=True)
def _wl_stats(x, out, flag):
    out[0] = _bond_sum(x)


class IsingKernel:
    """Heat-bath kernel adapter for the weight-learning chain."""

    def __init__(self, rows: int, cols: int, sweeps_per_step: int = 1):
        if rows < 1 or cols < 1:
            raise ValueError("lattice must have positive size")
        self.rows = rows
        self.cols = cols
        self.sweeps_per_step = int(sweeps_per_step)

    def initial_state(self, rng) -> np.ndarray:
        return random_lattice(self.rows, self.cols, rng)

    def sweep(self, state: np.ndarray, theta_point: np.ndarray, rng) -> np.ndarray:
        theta = float(np.asarray(theta_point).reshape(-1)[0])
        for _ in range(self.sweeps_per_step):
            u = rng.random(state.shape)
            _heatbath_sweep(state, theta, u)
        return state

    def stats(self, state: np.ndarray) -> np.ndarray:
        return np.array([float(_bond_sum(state))])

    def fast_spec(self):
        """Numba hooks for the batched weight-learning loop."""
        return _wl_sweep, _wl_stats, 0, self.rows * self.cols, self.sweeps_per_step


def ising_model(
    rows: int,
    cols: int,
    observed_stats: np.ndarray | None = None,
    observed_spins: np.ndarray | None = None,
) -> EnergyModel:
    """Ising target with the unit-interval prior box on theta."""
    if observed_stats is None:
        if observed_spins is not None:
            observed_stats = ising_stat(observed_spins)
        else:
            observed_stats = np.zeros(1)
    return EnergyModel(
        lower=np.array([0.0]),
        upper=np.array([1.0]),
        observed_stats=observed_stats,
        kind="ising",
        extra={"rows": rows, "cols": cols},
    )


def save_pgm(spins: np.ndarray, path) -> None:
    """Write a lattice snapshot as a plain-text PGM image (up=white)."""
    m, n = spins.shape
    with open(path, "w") as fh:
        fh.write("P2\n%d %d\n255\n" % (n, m))
        for i in range(m):
            fh.write(" ".join("255" if v > 0 else "0" for v in spins[i]) + "\n")

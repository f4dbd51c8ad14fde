"""Wang-Landau weight learning over a fixed set of parameter particles.

The engine runs a single auxiliary chain (X_n, I_n) on state x label pairs,
where the label indexes a particle theta^(i), together with a vector c of log
weights.  Each step advances x with one application of a model-specific kernel
at the current particle, resamples the label from the full conditional, and
applies a Rao-Blackwellized stochastic-approximation update to c.  The step
size gamma follows a flat-histogram schedule: it halves whenever the label
occupancy counts are close enough to uniform, and once gamma falls below eps1
it switches to the diminishing sequence eps1 / n**tail_exponent.

Long run, c(i) - c(j) converges to log Z(theta^(i)) - log Z(theta^(j)), which
is what the smoothed partition-function surface consumes.

The kernel passed to ``WlChain`` is any object with three methods:

    initial_state(rng) -> state
    sweep(state, theta_point, rng) -> state   (may mutate and return its input)
    stats(state) -> float64 vector of sufficient statistics

Single chain, single writer: a ``WlChain`` instance is not thread safe, but
``label_distribution`` and friends are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import EnergyModel

__all__ = [
    "ParticleSet",
    "StepSchedule",
    "WlChain",
    "label_distribution",
    "rao_blackwell_update",
    "flat_histogram_test",
    "next_gamma",
]

FLAT = "flat"
DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class ParticleSet:
    """Immutable (d, q) array of parameter particles."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("particles must form a nonempty (d, q) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("particles must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def validate_inside(self, model: EnergyModel) -> None:
        if not (
            np.all(self.points > model.lower) and np.all(self.points < model.upper)
        ):
            raise ValueError("all particles must lie inside the prior box")

    @classmethod
    def uniform_box(cls, model: EnergyModel, count: int, rng) -> "ParticleSet":
        q = model.lower.size
        pts = model.lower + (model.upper - model.lower) * rng.random((count, q))
        return cls(pts)

    @classmethod
    def gaussian(
        cls, model: EnergyModel, count: int, mean: float, variance: float, rng
    ) -> "ParticleSet":
        """Draw particles from an isotropic normal, redrawing any that land
        outside the prior box."""
        q = model.lower.size
        sd = float(np.sqrt(variance))
        pts = np.empty((count, q))
        filled = 0
        while filled < count:
            cand = mean + sd * rng.standard_normal((count - filled, q))
            ok = np.all((cand > model.lower) & (cand < model.upper), axis=1)
            kept = cand[ok]
            pts[filled : filled + kept.shape[0]] = kept
            filled += kept.shape[0]
        return cls(pts)


@dataclass(frozen=True)
class StepSchedule:
    """Step-size state for the weight recursion.

    In the flat-histogram phase gamma stays constant between halvings.  In the
    deterministic phase the values eps1 / n**tail_exponent are emitted in
    order; ``n_det`` is the index of the next value to emit.
    """

    gamma: float = 1.0
    eps1: float = 1e-3
    eps2: float = 0.2
    tail_exponent: float = 0.7
    phase: str = FLAT
    n_det: int = 0

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.eps1 <= 0.0 or self.eps2 <= 0.0:
            raise ValueError("eps1 and eps2 must be positive")
        if not 0.5 < self.tail_exponent <= 1.0:
            raise ValueError("tail exponent must lie in (0.5, 1]")
        if self.phase not in (FLAT, DETERMINISTIC):
            raise ValueError("unknown schedule phase %r" % (self.phase,))


def label_distribution(
    x_stats: np.ndarray, particles: ParticleSet, log_weights: np.ndarray
) -> np.ndarray:
    """Full conditional over labels: p(i) proportional to
    exp(<S(x), theta^(i)> - c(i)).

    Computed with a max shift, so any logit magnitudes representable in
    float64 are safe.
    """
    logits = particles.points @ np.asarray(x_stats, dtype=np.float64) - log_weights
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    return p


def rao_blackwell_update(
    log_weights: np.ndarray, probs: np.ndarray, gamma: float
) -> np.ndarray:
    """One stochastic-approximation step c <- c + gamma * p.

    Uses the full conditional probabilities rather than the sampled label, so
    each call adds exactly gamma of total mass to c.
    """
    if probs.shape != log_weights.shape:
        raise ValueError("probability vector shape does not match weights")
    return log_weights + gamma * probs


def flat_histogram_test(occupancy: np.ndarray, eps2: float) -> bool:
    """True when every label frequency is within eps2/d of uniform.

    An all-zero occupancy vector is defined as not flat.
    """
    total = int(occupancy.sum())
    if total <= 0:
        return False
    inv_d = 1.0 / occupancy.size
    dev = max(
        occupancy.max() / total - inv_d,
        inv_d - occupancy.min() / total,
    )
    return dev <= eps2 * inv_d


def next_gamma(schedule: StepSchedule, flat: bool) -> tuple[StepSchedule, bool]:
    """Advance the step-size schedule.

    Returns the new schedule and a flag that is True exactly when a
    flat-histogram halving fired (the caller must then reset occupancy).
    Flat phase: gamma halves on a flat histogram; when the halved value
    reaches eps1 the schedule enters the deterministic phase and emits
    eps1 / n**tail_exponent for n = 1, 2, ...  Deterministic phase: every
    call emits the next value of that sequence.
    """
    if schedule.phase == FLAT:
        if not flat:
            return schedule, False
        g = 0.5 * schedule.gamma
        if g <= schedule.eps1:
            first = schedule.eps1  # n = 1 tail value
            return (
                StepSchedule(
                    gamma=first,
                    eps1=schedule.eps1,
                    eps2=schedule.eps2,
                    tail_exponent=schedule.tail_exponent,
                    phase=DETERMINISTIC,
                    n_det=2,
                ),
                True,
            )
        return (
            StepSchedule(
                gamma=g,
                eps1=schedule.eps1,
                eps2=schedule.eps2,
                tail_exponent=schedule.tail_exponent,
                phase=FLAT,
                n_det=0,
            ),
            True,
        )
    n = max(schedule.n_det, 1)
    g = schedule.eps1 / n**schedule.tail_exponent
    return (
        StepSchedule(
            gamma=g,
            eps1=schedule.eps1,
            eps2=schedule.eps2,
            tail_exponent=schedule.tail_exponent,
            phase=DETERMINISTIC,
            n_det=n + 1,
        ),
        False,
    )


_FLAT_CORES: dict = {}


def _build_flat_core(sweep_fn, stats_fn):
    # exp(t) underflows to exactly 0.0 below this, so the guard changes
    # nothing numerically while skipping almost every exp call at large d
    exp_floor = -746.0

    @njit(nogil=True)
    def core(
        points,
        c,
        occupancy,
        x,
        stats_vec,
        label,
        u_kernel,
        u_labels,
        flag,
        sweeps,
        gamma,
        eps2,
        iteration,
        recenter_every,
        track_mass,
    ):
        d = points.shape[0]
        batch = u_labels.shape[0]
        per_sweep = u_kernel.shape[1] // sweeps
        inv_d = 1.0 / d
        logits = np.empty(d)
        probs = np.empty(d)
        total = np.int64(0)
        for i in range(d):
            total += occupancy[i]
        max_residual = 0.0
        fired = False
        used = 0
        for step in range(batch):
            theta_row = points[label]
            for s in range(sweeps):
                sweep_fn(x, theta_row, u_kernel[step, s * per_sweep : (s + 1) * per_sweep], flag)
            stats_fn(x, stats_vec, flag)

            mx = -np.inf
            for i in range(d):
                v = -c[i]
                for j in range(stats_vec.size):
                    v += points[i, j] * stats_vec[j]
                logits[i] = v
                if v > mx:
                    mx = v
            ssum = 0.0
            for i in range(d):
                t = logits[i] - mx
                p = np.exp(t) if t > exp_floor else 0.0
                probs[i] = p
                ssum += p
            for i in range(d):
                probs[i] /= ssum

            u = u_labels[step]
            new_label = d - 1
            acc = 0.0
            for i in range(d):
                acc += probs[i]
                if acc >= u:
                    new_label = i
                    break

            if track_mass:
                inc = 0.0
                for i in range(d):
                    old = c[i]
                    c[i] = old + gamma * probs[i]
                    inc += c[i] - old
                residual = abs(inc - gamma)
                if residual > max_residual:
                    max_residual = residual
            else:
                for i in range(d):
                    c[i] += gamma * probs[i]

            occupancy[new_label] += 1
            total += 1

            omax = occupancy[0]
            omin = occupancy[0]
            for i in range(1, d):
                o = occupancy[i]
                if o > omax:
                    omax = o
                elif o < omin:
                    omin = o
            dev_up = omax / total - inv_d
            dev_down = inv_d - omin / total
            dev = dev_up if dev_up > dev_down else dev_down
            flat = dev <= eps2 * inv_d

            label = new_label
            iteration += 1
            used = step + 1
            if recenter_every > 0 and iteration % recenter_every == 0:
                cm = 0.0
                for i in range(d):
                    cm += c[i]
                cm /= d
                for i in range(d):
                    c[i] -= cm
            if flat:
                fired = True
                break
        return used, fired, label, max_residual

    return core


def _flat_core_for(sweep_fn, stats_fn):
    key = (sweep_fn, stats_fn)
    core = _FLAT_CORES.get(key)
    if core is None:
        core = _build_flat_core(sweep_fn, stats_fn)
        _FLAT_CORES[key] = core
    return core


class WlChain:
    """Driver for the coupled (state, label, weight) chain.

    Owns the mutable pieces: the model state x, the current label, the log
    weight vector c, the occupancy counts, and the schedule.  ``store`` is an
    optional SampleStore that receives (label, stats) pairs; recording starts
    when the deterministic phase starts unless ``record_from_start`` is set.

    c is recentered to mean zero every ``recenter_every`` iterations, which
    changes nothing the estimates depend on (only weight differences matter)
    but keeps the entries bounded on long runs.  ``recentered_now`` is True
    right after a step that recentered, so a caller holding cached values of
    the absolute surface level can refresh them.
    """

    def __init__(
        self,
        model: EnergyModel,
        particles: ParticleSet,
        kernel,
        rng_kernel,
        rng_labels,
        schedule: StepSchedule | None = None,
        store=None,
        c0: np.ndarray | None = None,
        recenter_every: int = 10_000,
        record_from_start: bool = False,
        track_mass: bool = True,
    ):
        if particles.dim != model.lower.size:
            raise ValueError("particle dimension does not match the model")
        particles.validate_inside(model)
        self.model = model
        self.particles = particles
        self.kernel = kernel
        self.rng_kernel = rng_kernel
        self.rng_labels = rng_labels
        self.schedule = schedule if schedule is not None else StepSchedule()
        self.store = store
        self.recenter_every = int(recenter_every)
        self.record_from_start = bool(record_from_start)
        self.track_mass = bool(track_mass)

        d = particles.count
        if c0 is None:
            self.c = np.zeros(d)
        else:
            self.c = np.array(c0, dtype=np.float64, copy=True)
            if self.c.shape != (d,):
                raise ValueError("c0 must have one entry per particle")
        if not np.all(np.isfinite(self.c)):
            raise ValueError("log weights must be finite")
        self.occupancy = np.zeros(d, dtype=np.int64)
        self.x = kernel.initial_state(rng_kernel)
        self.x_stats = np.asarray(kernel.stats(self.x), dtype=np.float64)
        self.label = 0
        self.iteration = 0
        self.halvings: list[dict] = []
        self.max_mass_residual = 0.0
        self.recentered_now = False

    @property
    def recording(self) -> bool:
        return self.store is not None and (
            self.record_from_start or self.schedule.phase == DETERMINISTIC
        )

    def step(self) -> None:
        """One full update: kernel sweep, label resample, weight update,
        occupancy bookkeeping, schedule advance."""
        gamma = self.schedule.gamma
        record = self.recording

        theta_cur = self.particles.points[self.label]
        self.x = self.kernel.sweep(self.x, theta_cur, self.rng_kernel)
        stats = np.asarray(self.kernel.stats(self.x), dtype=np.float64)

        probs = label_distribution(stats, self.particles, self.c)
        u = self.rng_labels.random()
        new_label = int(np.searchsorted(np.cumsum(probs), u))
        if new_label >= probs.size:
            new_label = probs.size - 1

        if self.track_mass:
            before = self.c.copy()
        self.c += gamma * probs
        if self.track_mass:
            # sum the per-entry increments, not the difference of two large
            # sums: Sigma c reaches recenter_every * gamma between recenters
            # and its ulp alone would exceed the 1e-12 budget
            residual = abs(float(np.sum(self.c - before)) - gamma)
            if residual > self.max_mass_residual:
                self.max_mass_residual = residual

        self.occupancy[new_label] += 1
        if record:
            self.store.record(new_label, stats)

        flat = False
        if self.schedule.phase == FLAT:
            flat = flat_histogram_test(self.occupancy, self.schedule.eps2)
        new_schedule, reset = next_gamma(self.schedule, flat)
        if reset:
            self.halvings.append(
                {
                    "iteration": self.iteration + 1,
                    "occupancy": self.occupancy.copy(),
                    "gamma_before": self.schedule.gamma,
                    "gamma_after": new_schedule.gamma,
                    "phase_after": new_schedule.phase,
                }
            )
            self.occupancy[:] = 0
        self.schedule = new_schedule

        self.label = new_label
        self.x_stats = stats
        self.iteration += 1

        self.recentered_now = False
        if self.recenter_every > 0 and self.iteration % self.recenter_every == 0:
            self.c -= self.c.mean()
            self.recentered_now = True

    def run_flat_phase(self, max_iterations: int, batch_size: int | None = None) -> int:
        """Step until the deterministic phase starts; returns iterations used.

        When the kernel exposes numba-compatible sweep and stats functions
        (``fast_spec``) and nothing is being recorded, the loop runs in a
        compiled batch core: kernel uniforms are pre-drawn per batch in the
        same stream order the plain loop would use, and any tail left over
        when a halving ends a batch early is discarded.  The discard makes
        the realized chain differ from the one ``step()`` would produce, but
        every run with the same seed takes the same path, which is the
        determinism the outputs rely on.
        """
        start = self.iteration
        fast = getattr(self.kernel, "fast_spec", None)
        if fast is None or (self.store is not None and self.record_from_start):
            while self.schedule.phase == FLAT:
                if self.iteration - start >= max_iterations:
                    raise RuntimeError(
                        "flat-histogram phase did not finish within %d iterations "
                        "(gamma=%.3g, iteration=%d)"
                        % (max_iterations, self.schedule.gamma, self.iteration)
                    )
                self.step()
            return self.iteration - start

        sweep_fn, stats_fn, flag, per_sweep, sweeps = fast()
        core = _flat_core_for(sweep_fn, stats_fn)
        per_step = per_sweep * sweeps
        if batch_size is None:
            batch_size = min(65536, max(1024, 8_000_000 // max(per_step, 1)))
        stats_vec = np.array(self.x_stats, dtype=np.float64, copy=True)
        while self.schedule.phase == FLAT:
            remaining = max_iterations - (self.iteration - start)
            if remaining <= 0:
                raise RuntimeError(
                    "flat-histogram phase did not finish within %d iterations "
                    "(gamma=%.3g, iteration=%d)"
                    % (max_iterations, self.schedule.gamma, self.iteration)
                )
            batch = int(min(batch_size, remaining))
            u_kernel = self.rng_kernel.random((batch, per_step))
            u_labels = self.rng_labels.random(batch)
            used, fired, label, residual = core(
                self.particles.points,
                self.c,
                self.occupancy,
                self.x,
                stats_vec,
                self.label,
                u_kernel,
                u_labels,
                flag,
                sweeps,
                self.schedule.gamma,
                self.schedule.eps2,
                self.iteration,
                self.recenter_every,
                self.track_mass,
            )
            self.iteration += int(used)
            self.label = int(label)
            self.x_stats = stats_vec.copy()
            if residual > self.max_mass_residual:
                self.max_mass_residual = float(residual)
            if fired:
                new_schedule, _ = next_gamma(self.schedule, True)
                self.halvings.append(
                    {
                        "iteration": self.iteration,
                        "occupancy": self.occupancy.copy(),
                        "gamma_before": self.schedule.gamma,
                        "gamma_after": new_schedule.gamma,
                        "phase_after": new_schedule.phase,
                    }
                )
                self.occupancy[:] = 0
                self.schedule = new_schedule
        self.recentered_now = False
        return self.iteration - start

    def checkpoint_record(self) -> dict:
        return {
            "iteration": self.iteration,
            "gamma": self.schedule.gamma,
            "phase": self.schedule.phase,
            "n_det": self.schedule.n_det,
            "c": self.c.copy(),
            "occupancy": self.occupancy.copy(),
            "label": self.label,
        }

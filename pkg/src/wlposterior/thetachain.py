"""Adaptive random-walk Metropolis on theta against an estimated surface.

The target is proportional to exp(<S(x0), theta>) / Z(theta) on the prior
box, with Z supplied by any object exposing ``log_z(theta)`` (a ZEstimate
snapshot, or an exact oracle surface in tests).  Proposals are either
coordinatewise uniform windows folded back into the box by reflection, or a
single Gaussian block scaled by an adapted covariance; a Gaussian candidate
falling outside the box counts as an immediate rejection.

Scale adaptation is a Robbins-Monro recursion on the log proposal scale
driving the acceptance rate to ``target_rate``, with step sizes t**-exponent.
The same step sizes feed recursive estimates of the chain mean and
covariance; the covariance is blended into Gaussian proposals only after
``cov_blend_after`` steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import EnergyModel, log_prior

__all__ = [
    "ReflectedUniformProposal",
    "GaussianBlockProposal",
    "AdaptState",
    "ThetaChain",
    "mh_log_acceptance",
    "reflect_into_box",
]

_LOG_FLOOR = 5e-324  # smallest positive double; guards log(0) on unit draws


def reflect_into_box(
    x: np.ndarray, lower: np.ndarray, upper: np.ndarray
) -> np.ndarray:
    """Fold a raw draw back into [lower, upper] by repeated reflection."""
    width = upper - lower
    y = np.mod(x - lower, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lower + y


@dataclass(frozen=True)
class ReflectedUniformProposal:
    """Componentwise uniform window around the current point, reflected at
    the box walls.  The fold preserves symmetry, so no proposal correction
    is needed and every candidate lands inside the box."""

    lower: np.ndarray
    upper: np.ndarray
    half_width: np.ndarray  # base window, multiplied by the adapted scale

    def propose(self, theta: np.ndarray, scale: float, adapt, rng) -> np.ndarray:
        q = theta.size
        raw = theta + (2.0 * rng.random(q) - 1.0) * (self.half_width * scale)
        return reflect_into_box(raw, self.lower, self.upper)


@dataclass(frozen=True)
class GaussianBlockProposal:
    """Full-vector Gaussian step scaled by the adapted covariance.  A
    candidate outside the box is reported as None: the chain stays put and
    the move counts as a rejection."""

    lower: np.ndarray
    upper: np.ndarray

    def propose(self, theta: np.ndarray, scale: float, adapt, rng):
        step = adapt.chol() @ rng.standard_normal(theta.size)
        cand = theta + scale * step
        if np.all(cand > self.lower) and np.all(cand < self.upper):
            return cand
        return None


@dataclass
class AdaptState:
    """Robbins-Monro adaptation state shared by both proposal flavors.

    ``log_scale`` is clamped to ``log_scale_bounds``: on targets so flat that
    no scale reaches the target rate the raw recursion diverges, and once the
    scale passes ~1e13 the reflection fold loses all precision.  Bounded
    adaptation keeps the kernel a valid MH transition at the clamp.
    """

    log_scale: float
    mean: np.ndarray
    cov: np.ndarray
    t: int = 0
    target_rate: float = 0.30
    exponent: float = 0.6
    cov_blend_after: int = 1000
    log_scale_bounds: tuple = (-23.0, 23.0)
    _chol: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def fresh(
        cls,
        dim: int,
        initial_scale: float | None = None,
        target_rate: float = 0.30,
        exponent: float = 0.6,
        cov_blend_after: int = 1000,
    ) -> "AdaptState":
        if initial_scale is None:
            initial_scale = 2.38 / np.sqrt(dim)
        return cls(
            log_scale=float(np.log(initial_scale)),
            mean=np.zeros(dim),
            cov=np.eye(dim),
            target_rate=target_rate,
            exponent=exponent,
            cov_blend_after=cov_blend_after,
        )

    def scale(self) -> float:
        return float(np.exp(self.log_scale))

    def update(self, accepted: bool, theta: np.ndarray) -> None:
        """Feed one transition: nudge the log scale toward the target
        acceptance rate and refresh the running mean and covariance."""
        self.t += 1
        eta = self.t ** (-self.exponent)
        self.log_scale += eta * ((1.0 if accepted else 0.0) - self.target_rate)
        lo, hi = self.log_scale_bounds
        if self.log_scale < lo:
            self.log_scale = lo
        elif self.log_scale > hi:
            self.log_scale = hi
        delta = theta - self.mean
        self.cov = (1.0 - eta) * self.cov + eta * np.outer(delta, delta)
        self.cov = 0.5 * (self.cov + self.cov.T)
        self.mean = self.mean + eta * delta
        self._chol = None

    def proposal_cov(self) -> np.ndarray:
        if self.t < self.cov_blend_after:
            return np.eye(self.mean.size)
        return self.cov

    def chol(self) -> np.ndarray:
        if self._chol is not None:
            return self._chol
        cov = self.proposal_cov()
        jitter = 0.0
        scale = max(np.trace(cov) / cov.shape[0], 1e-12)
        for _ in range(12):
            try:
                chol = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
                self._chol = chol
                return chol
            except np.linalg.LinAlgError:
                jitter = max(2.0 * jitter, 1e-10 * scale)
        raise np.linalg.LinAlgError("proposal covariance cannot be repaired")


def mh_log_acceptance(
    model: EnergyModel,
    theta: np.ndarray,
    theta_new: np.ndarray,
    logz_cur: float,
    logz_new: float,
    stats: np.ndarray | None = None,
) -> float:
    """Log MH ratio for a symmetric proposal:
    <S, theta' - theta> + log prior difference + log Z(theta) - log Z(theta').
    """
    lp_new = log_prior(model, theta_new)
    if lp_new == -np.inf:
        return -np.inf
    lp_old = log_prior(model, theta)
    s = model.observed_stats if stats is None else np.asarray(stats, dtype=np.float64)
    return float(s @ (theta_new - theta) + (lp_new - lp_old) + logz_cur - logz_new)


class ThetaChain:
    """Random-walk Metropolis driver.

    ``stats_fn``, when given, supplies the statistic vector entering the
    acceptance ratio at each step (the image model conditions on the current
    latent lattice rather than fixed data).  The log-surface value at the
    current point is cached per snapshot: a step handed a surface object it
    has not seen re-evaluates the current point on it before comparing, so
    both sides of the acceptance ratio always come from the same snapshot
    and absolute-level changes between snapshots (weight recentering, early
    history growth) cancel by construction.  Only a caller that reuses one
    snapshot across steps gets the single-evaluation fast path.
    """

    def __init__(
        self,
        model: EnergyModel,
        proposal,
        adapt: AdaptState,
        rng,
        theta0: np.ndarray | None = None,
        stats_fn=None,
    ):
        self.model = model
        self.proposal = proposal
        self.adapt = adapt
        self.rng = rng
        self.theta = (
            model.center() if theta0 is None else np.array(theta0, dtype=np.float64)
        )
        if not model.contains(self.theta):
            raise ValueError("initial theta must lie inside the prior box")
        self.stats_fn = stats_fn
        self.cached_logz: float | None = None
        self._cache_surface: object | None = None
        self.trace: list[np.ndarray] = []
        self.accepts: list[bool] = []
        self.log_accs: list[float] = []

    def refresh_cache(self, surface) -> None:
        self.cached_logz = surface.log_z(self.theta)
        self._cache_surface = surface

    def step(self, surface) -> bool:
        """One MH transition against the given surface snapshot."""
        if self.cached_logz is None or self._cache_surface is not surface:
            self.refresh_cache(surface)
        stats = (
            self.model.observed_stats if self.stats_fn is None else self.stats_fn()
        )
        cand = self.proposal.propose(self.theta, self.adapt.scale(), self.adapt, self.rng)
        if cand is None:
            accepted = False
            log_acc = -np.inf
        else:
            logz_new = surface.log_z(cand)
            log_acc = mh_log_acceptance(
                self.model, self.theta, cand, self.cached_logz, logz_new, stats
            )
            u = self.rng.random()
            accepted = np.log(max(u, _LOG_FLOOR)) < log_acc
            if accepted:
                self.theta = cand
                self.cached_logz = logz_new
        self.adapt.update(accepted, self.theta)
        self.trace.append(self.theta)
        self.accepts.append(accepted)
        self.log_accs.append(log_acc)
        return accepted

    def trace_array(self) -> np.ndarray:
        if not self.trace:
            return np.empty((0, self.theta.size))
        return np.asarray(self.trace)

    def acceptance_rate(self, start: int = 0) -> float:
        acc = self.accepts[start:]
        if not acc:
            return float("nan")
        return float(np.mean(acc))

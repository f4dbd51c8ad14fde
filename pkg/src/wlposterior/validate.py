"""Self-contained correctness checks runnable from the command line.

Two levels: ``fast`` covers exact invariants and a small surface comparison
(seconds), ``full`` adds statistical checks against enumerated references
(minutes).  Each check returns a measured value and its threshold; the
report is written as JSON.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from .config import RunConfig
from .models.ising import IsingKernel, bond_sum, cftp_sample, ising_model
from .oracle import EnumerableInstance, exact_posterior, fd_gradient_error
from .runner import build_experiment, run_experiment
from .wl import (
    DETERMINISTIC,
    FLAT,
    ParticleSet,
    StepSchedule,
    WlChain,
    flat_histogram_test,
    next_gamma,
)
from .zsurface import SampleStore, SmoothingKernel

__all__ = ["validate_suite", "CHECKS"]


def _check_schedule(seed):
    del seed
    errs = []
    s = StepSchedule(gamma=1e-3, phase=DETERMINISTIC, n_det=1)
    out, _ = next_gamma(s, False)
    errs.append(abs(out.gamma - 1e-3))
    s = StepSchedule(gamma=1.0, phase=DETERMINISTIC, n_det=100)
    out, _ = next_gamma(s, False)
    errs.append(abs(out.gamma - 1e-3 / 100**0.7))
    s = StepSchedule(gamma=0.002, phase=FLAT)
    out, reset = next_gamma(s, True)
    errs.append(0.0 if (out.phase == DETERMINISTIC and out.gamma == 1e-3 and reset) else 1.0)
    value = max(errs)
    return value, 1e-15, value <= 1e-15


def _check_flat_cases(seed):
    del seed
    ok = (
        not flat_histogram_test(np.zeros(4, dtype=np.int64), 0.2)
        and flat_histogram_test(np.array([60, 40]), 0.2)
        and not flat_histogram_test(np.array([61, 39]), 0.2)
    )
    return 0.0 if ok else 1.0, 0.5, ok


def _check_mass_conservation(seed):
    rng = np.random.default_rng(seed)
    model = ising_model(1, 2)
    particles = ParticleSet.uniform_box(model, 5, rng)
    wl = WlChain(
        model,
        particles,
        IsingKernel(1, 2),
        np.random.default_rng(seed + 1),
        np.random.default_rng(seed + 2),
    )
    for _ in range(2000):
        wl.step()
    return wl.max_mass_residual, 1e-12, wl.max_mass_residual <= 1e-12


def _check_fd_identity(seed):
    del seed
    inst = EnumerableInstance.ising(2, 3)
    worst = max(
        fd_gradient_error(inst, [t]) for t in (0.1, 0.4, 0.8)
    )
    return worst, 1e-6, worst <= 1e-6


def _check_quadrature_prior(seed):
    del seed
    model = ising_model(3, 3)
    res = exact_posterior(model, None, prior_only=True)
    err = abs(float(res.mean[0]) - 0.5)
    return err, 1e-9, err <= 1e-9


def _check_surface_small(seed):
    cfg = RunConfig(
        model="ising", rows=1, cols=2, theta_true=0.4, d=5,
        theta_steps=1, seed=seed, out_dir="unused",
    )
    exp = build_experiment(cfg)
    exp.wl.run_flat_phase(cfg.max_wl_iterations)
    for _ in range(20_000):
        exp.wl.step()
    surface = exp.store.snapshot(exp.particles, exp.wl.c, exp.smooth)
    inst = EnumerableInstance.ising(1, 2)
    grid = np.linspace(0.02, 0.98, 25)
    ref = inst.exact_log_z_many(grid[:, None])
    est = surface.log_z_many(grid[:, None])
    # weights only pin down the surface up to one additive constant
    diff = est - ref
    worst = float(np.max(np.abs(diff - diff.mean())))
    return worst, 0.05, worst <= 0.05


def _check_cftp_uniform(seed):
    rng = np.random.default_rng(seed)
    inst = EnumerableInstance.ising(2, 2)
    theta = 0.4
    logits = inst.stats[:, 0] * theta + inst.log_counts
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    stat_vals = inst.stats[:, 0]
    order = {v: k for k, v in enumerate(stat_vals)}
    counts = np.zeros(stat_vals.size)
    n = 20_000
    for _ in range(n):
        spins = cftp_sample(2, 2, theta, rng)
        counts[order[float(bond_sum(spins))]] += 1
    chi2 = sstats.chisquare(counts, probs * n)
    return float(chi2.pvalue), 1e-3, chi2.pvalue > 1e-3


def _check_pipeline_small(seed):
    cfg = RunConfig(
        model="ising", rows=1, cols=2, theta_true=0.4, d=5,
        theta_steps=50_000, burn_in=1999, seed=seed,
        out_dir=str(Path("validate_out") / "pipeline_small"),
    )
    res = run_experiment(cfg)
    inst = EnumerableInstance.ising(1, 2)
    model = res.exp.model
    ref = exact_posterior(model, inst)
    kept = res.trace[cfg.burn_in :, 0]
    err = abs(float(kept.mean()) - float(ref.mean[0]))
    return err, 0.03, err <= 0.03


def _check_wl_3x3(seed):
    cfg = RunConfig(
        model="ising", rows=3, cols=3, theta_true=0.4, d=20,
        theta_steps=1, seed=seed, out_dir="unused",
    )
    exp = build_experiment(cfg)
    exp.wl.run_flat_phase(cfg.max_wl_iterations)
    for _ in range(100_000):
        exp.wl.step()
    inst = EnumerableInstance.ising(3, 3)
    ref = inst.exact_log_z_many(exp.particles.points)
    diff = exp.wl.c - ref
    worst = float(np.max(np.abs(diff - diff.mean())))
    return worst, 0.05, worst <= 0.05


CHECKS = [
    ("schedule_examples", "fast", _check_schedule),
    ("flat_histogram_cases", "fast", _check_flat_cases),
    ("weight_mass_conservation", "fast", _check_mass_conservation),
    ("gradient_identity", "fast", _check_fd_identity),
    ("quadrature_prior_only", "fast", _check_quadrature_prior),
    ("surface_vs_enumeration_small", "fast", _check_surface_small),
    ("perfect_sampler_uniformity", "full", _check_cftp_uniform),
    ("pipeline_posterior_small", "full", _check_pipeline_small),
    ("weights_vs_enumeration_3x3", "full", _check_wl_3x3),
]


def validate_suite(level: str = "fast", seed: int = 20260816, out_path=None) -> dict:
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    levels = ("fast",) if level == "fast" else ("fast", "full")
    checks = []
    for name, lvl, fn in CHECKS:
        if lvl not in levels:
            continue
        t0 = time.perf_counter()
        value, threshold, passed = fn(seed)
        checks.append(
            {
                "name": name,
                "level": lvl,
                "value": value,
                "threshold": threshold,
                "passed": bool(passed),
                "seconds": round(time.perf_counter() - t0, 3),
            }
        )
    report = {
        "level": level,
        "seed": seed,
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks),
    }
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return report

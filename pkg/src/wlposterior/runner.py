"""End-to-end experiment driver.

``run_experiment`` builds the model, data, particles, and both chains from a
RunConfig, runs the flat-histogram warmup followed by the joint loop (one
weight-learning step, one Metropolis step on theta, and for the image model
one latent refresh per iteration), and writes trace.csv, logz.csv,
summary.json, and optionally checkpoint.bin into the output directory.

Determinism contract: all randomness flows through named substreams spawned
from the config seed, outputs contain no wall-clock data, and a run resumed
from a checkpoint writes byte-identical files to the uninterrupted run.
"""

from __future__ import annotations

import dataclasses
import json
import os
import pickle
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .diagnostics import summarize
from .model import EnergyModel
from .models.ergm import ErgmKernel, ergm_model, florentine_business, load_edge_list
from .models.imageseg import ImageSegSampler, simulate_noisy_image
from .models.ising import IsingKernel, cftp_sample, ising_model
from .thetachain import (
    AdaptState,
    GaussianBlockProposal,
    ReflectedUniformProposal,
    ThetaChain,
)
from .wl import ParticleSet, StepSchedule, WlChain
from .zsurface import SampleStore, SmoothingKernel, nearest_neighbor_bandwidth

STREAM_NAMES = ("data", "particles", "kernel", "labels", "theta", "adapt", "latent")
CHECKPOINT_VERSION = 2

__all__ = [
    "STREAM_NAMES",
    "Experiment",
    "RunResult",
    "make_streams",
    "build_experiment",
    "run_experiment",
    "run_surface",
    "parse_grid_spec",
]


def make_streams(seed: int) -> dict:
    """Independent generators spawned from one seed, in a fixed name order.

    The order is part of the output format: reordering or renaming streams
    changes every downstream draw.  The adapt stream is reserved (adaptation
    is currently deterministic given the chain) so the layout stays stable.
    """
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {
        name: np.random.Generator(np.random.PCG64(ss))
        for name, ss in zip(STREAM_NAMES, children)
    }


@dataclass
class Experiment:
    cfg: RunConfig
    streams: dict
    model: EnergyModel
    kernel: object
    particles: ParticleSet
    smooth: SmoothingKernel
    store: SampleStore
    wl: WlChain
    theta: ThetaChain
    latent: ImageSegSampler | None
    observed: dict


def build_experiment(cfg: RunConfig) -> Experiment:
    cfg.validate()
    streams = make_streams(cfg.seed)
    latent = None
    observed: dict = {}

    if cfg.model == "ising":
        spins0 = cftp_sample(
            cfg.rows, cfg.cols, cfg.theta_true, streams["data"], t_max=cfg.cftp_t_max
        )
        model = ising_model(cfg.rows, cfg.cols, observed_spins=spins0)
        kernel = IsingKernel(cfg.rows, cfg.cols, cfg.sweeps_per_step)
        observed["spins"] = spins0
    elif cfg.model == "imageseg":
        true_spins = cftp_sample(
            cfg.rows, cfg.cols, cfg.theta_true, streams["data"], t_max=cfg.cftp_t_max
        )
        y = simulate_noisy_image(true_spins, cfg.sigma_true, streams["data"])
        latent = ImageSegSampler(y)
        model = ising_model(cfg.rows, cfg.cols, observed_stats=latent.current_stats)
        kernel = IsingKernel(cfg.rows, cfg.cols, cfg.sweeps_per_step)
        observed["true_spins"] = true_spins
        observed["y"] = y
    else:
        adj = load_edge_list(cfg.edge_file) if cfg.edge_file else florentine_business()
        model = ergm_model(adj, cfg.stat_variant)
        kernel = ErgmKernel(adj.shape[0], cfg.stat_variant, cfg.sweeps_per_step)
        observed["adjacency"] = adj

    if cfg.particle_source == "uniform":
        particles = ParticleSet.uniform_box(model, cfg.d, streams["particles"])
    else:
        particles = ParticleSet.gaussian(
            model, cfg.d, cfg.particle_mean, cfg.particle_var, streams["particles"]
        )

    if cfg.bandwidth > 0:
        smooth = SmoothingKernel(cfg.bandwidth)
    else:
        smooth = SmoothingKernel(nearest_neighbor_bandwidth(particles))

    store = SampleStore(cfg.d, model.stat_dim, stride=cfg.store_stride)
    schedule = StepSchedule(
        gamma=cfg.gamma0,
        eps1=cfg.eps1,
        eps2=cfg.eps2,
        tail_exponent=cfg.tail_exponent,
    )
    wl = WlChain(
        model,
        particles,
        kernel,
        streams["kernel"],
        streams["labels"],
        schedule=schedule,
        store=store,
        recenter_every=cfg.recenter_every,
        record_from_start=cfg.record_from_start,
    )

    q = model.stat_dim
    if cfg.proposal == "reflected":
        proposal = ReflectedUniformProposal(
            model.lower, model.upper, cfg.proposal_width_frac * (model.upper - model.lower)
        )
        initial_scale = 1.0
    else:
        proposal = GaussianBlockProposal(model.lower, model.upper)
        initial_scale = None  # 2.38 / sqrt(q)
    adapt = AdaptState.fresh(
        q,
        initial_scale=initial_scale,
        target_rate=cfg.target_rate,
        exponent=cfg.adapt_exponent,
        cov_blend_after=cfg.cov_blend_after,
    )
    stats_fn = None
    if latent is not None:
        stats_fn = lambda: latent.current_stats  # noqa: E731
    theta = ThetaChain(
        model, proposal, adapt, streams["theta"], theta0=None, stats_fn=stats_fn
    )

    return Experiment(
        cfg=cfg,
        streams=streams,
        model=model,
        kernel=kernel,
        particles=particles,
        smooth=smooth,
        store=store,
        wl=wl,
        theta=theta,
        latent=latent,
        observed=observed,
    )


def _store_warmup(exp: Experiment, cfg: RunConfig) -> int:
    """Keep the particle chain running until every label holds a few recorded
    samples, so the first surface snapshot the theta chain sees is finite and
    sane everywhere.  A label with an empty history contributes nothing to the
    smoothed estimate, which craters the surface near that particle and can
    pin the theta chain against the box boundary for thousands of steps.

    Returns the number of extra particle-chain steps taken.
    """
    target = cfg.store_warmup_samples
    if target <= 0:
        return 0
    cap = 10 * cfg.d * cfg.d + 10_000  # label walk covers d labels in ~d^2 steps
    steps = 0
    stored = exp.store.stored
    while steps < cap and int(stored.min()) < target:
        exp.wl.step()
        steps += 1
    return steps


def _collect_state(
    exp: Experiment, joint_iter, flat_iters, warmup_iters, gammas, sigma2s
) -> dict:
    wl, th, ad = exp.wl, exp.theta, exp.theta.adapt
    return {
        "version": CHECKPOINT_VERSION,
        "config": exp.cfg.to_dict(),
        "joint_iter": int(joint_iter),
        "flat_iterations": int(flat_iters),
        "warmup_iterations": int(warmup_iters),
        "wl": {
            "c": wl.c.copy(),
            "occupancy": wl.occupancy.copy(),
            "schedule": dataclasses.asdict(wl.schedule),
            "x": np.array(wl.x, copy=True),
            "x_stats": wl.x_stats.copy(),
            "label": wl.label,
            "iteration": wl.iteration,
            "halvings": [dict(h, occupancy=h["occupancy"].copy()) for h in wl.halvings],
            "max_mass_residual": wl.max_mass_residual,
            "recentered_now": wl.recentered_now,
        },
        "store": exp.store.state_dict(),
        "theta": {
            "theta": th.theta.copy(),
            "trace": th.trace_array(),
            "accepts": np.array(th.accepts, dtype=bool),
            "log_accs": np.array(th.log_accs),
        },
        "adapt": {
            "log_scale": ad.log_scale,
            "mean": ad.mean.copy(),
            "cov": ad.cov.copy(),
            "t": ad.t,
        },
        "rng": {name: gen.bit_generator.state for name, gen in exp.streams.items()},
        "gammas": np.array(gammas),
        "sigma2s": np.array(sigma2s),
        "latent": exp.latent.state_dict() if exp.latent is not None else None,
    }


def _restore_state(exp: Experiment, state: dict):
    if state.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            "checkpoint version %r is not supported" % (state.get("version"),)
        )
    now = exp.cfg.to_dict()
    then = state["config"]
    skip = {"out_dir", "checkpoint_interval"}
    diff = [k for k in now if k not in skip and now[k] != then.get(k)]
    if diff:
        raise ValueError(
            "checkpoint was written under a different configuration "
            "(differing keys: %s)" % ", ".join(sorted(diff))
        )

    wl = exp.wl
    s = state["wl"]
    wl.c = np.array(s["c"], dtype=np.float64)
    wl.occupancy = np.array(s["occupancy"], dtype=np.int64)
    wl.schedule = StepSchedule(**s["schedule"])
    wl.x = np.array(s["x"], copy=True)
    wl.x_stats = np.array(s["x_stats"], dtype=np.float64)
    wl.label = int(s["label"])
    wl.iteration = int(s["iteration"])
    wl.halvings = [dict(h, occupancy=h["occupancy"].copy()) for h in s["halvings"]]
    wl.max_mass_residual = float(s["max_mass_residual"])
    wl.recentered_now = bool(s["recentered_now"])

    exp.store = SampleStore.from_state_dict(state["store"])
    wl.store = exp.store

    th = exp.theta
    t = state["theta"]
    th.theta = np.array(t["theta"], dtype=np.float64)
    th.trace = [row.copy() for row in t["trace"]]
    th.accepts = [bool(a) for a in t["accepts"]]
    th.log_accs = [float(v) for v in t["log_accs"]]

    ad = exp.theta.adapt
    a = state["adapt"]
    ad.log_scale = float(a["log_scale"])
    ad.mean = np.array(a["mean"], dtype=np.float64)
    ad.cov = np.array(a["cov"], dtype=np.float64)
    ad.t = int(a["t"])
    ad._chol = None

    for name, gen in exp.streams.items():
        gen.bit_generator.state = state["rng"][name]

    if exp.latent is not None:
        exp.latent.load_state_dict(state["latent"])

    return (
        int(state["joint_iter"]),
        int(state["flat_iterations"]),
        int(state["warmup_iterations"]),
        list(state["gammas"]),
        list(state["sigma2s"]),
    )


def save_checkpoint(path, state: dict) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump(state, fh, protocol=4)
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        return pickle.load(fh)


def _fmt(x) -> str:
    return "%.17g" % float(x)


def parse_grid_spec(spec: str):
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError("grid must look like lo:hi:steps, got %r" % (spec,))
    lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    if not hi > lo:
        raise ValueError("grid needs hi > lo, got %r" % (spec,))
    if steps < 2:
        raise ValueError("grid needs at least two points, got %r" % (spec,))
    return lo, hi, steps


def write_trace_csv(path, trace, accepts, log_accs, gammas, sigma2s=None) -> None:
    n, q = trace.shape
    cols = ["iteration"]
    cols += ["theta_%d" % k for k in range(q)]
    cols += ["accepted", "log_acceptance", "gamma"]
    if sigma2s is not None:
        cols.append("sigma2")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(n):
            row = [str(i)]
            row += [_fmt(v) for v in trace[i]]
            row.append(str(int(accepts[i])))
            row.append(_fmt(log_accs[i]))
            row.append(_fmt(gammas[i]))
            if sigma2s is not None:
                row.append(_fmt(sigma2s[i]))
            fh.write(",".join(row) + "\n")


def write_logz_csv(path, surface, model: EnergyModel, spec: str = "") -> None:
    """Axis scans of the learned surface: coordinate k varies over its grid
    while the others sit at the box center."""
    center = model.center()
    with open(path, "w") as fh:
        fh.write("axis,coord,logz\n")
        for k in range(model.stat_dim):
            if spec:
                lo, hi, steps = parse_grid_spec(spec)
            else:
                lo, hi, steps = model.lower[k], model.upper[k], 101
            for t in np.linspace(lo, hi, steps):
                th = center.copy()
                th[k] = t
                fh.write("%d,%s,%s\n" % (k, _fmt(t), _fmt(surface.log_z(th))))


@dataclass
class RunResult:
    cfg: RunConfig
    exp: Experiment
    out_dir: Path
    trace: np.ndarray
    accepts: np.ndarray
    log_accs: np.ndarray
    gammas: np.ndarray
    sigma2s: np.ndarray | None
    surface: object
    summary: dict
    flat_iterations: int
    warmup_iterations: int
    elapsed: float


def _build_summary(exp: Experiment, result_arrays, flat_iters, warmup_iters) -> dict:
    cfg = exp.cfg
    trace, accepts, gammas, sigma2s = result_arrays
    wl, store = exp.wl, exp.store
    n = trace.shape[0]
    burn = cfg.burn_in if cfg.burn_in < n else n // 2
    chain = summarize(
        trace, burn_in=burn, accepts=accepts, max_lag=min(cfg.max_lag, n - burn - 1)
    )
    theta_summary = chain.to_dict()
    half = n // 2
    theta_summary["acceptance_rate_final_half"] = (
        float(np.mean(accepts[half:])) if n - half > 0 else float("nan")
    )
    summary = {
        "config": cfg.to_dict(),
        "model": {
            "kind": exp.model.kind,
            "stat_dim": exp.model.stat_dim,
            "observed_stats": exp.model.observed_stats.tolist(),
        },
        "wl": {
            "iterations": wl.iteration,
            "flat_iterations": flat_iters,
            "warmup_iterations": warmup_iters,
            "halvings": len(wl.halvings),
            "final_gamma": wl.schedule.gamma,
            "phase": wl.schedule.phase,
            "max_mass_residual": wl.max_mass_residual,
            "bandwidth": exp.smooth.bandwidth,
            "records": int(store.visits.sum()),
            "stored": int(store.stored.sum()),
        },
        "theta": theta_summary,
    }
    if sigma2s is not None and sigma2s.size:
        kept = sigma2s[burn:] if burn < sigma2s.size else sigma2s
        sig = np.sqrt(kept)
        summary["noise"] = {
            "mean_sigma2": float(kept.mean()),
            "mean_sigma": float(sig.mean()),
            "quantiles_sigma": {
                "0.025": float(np.quantile(sig, 0.025)),
                "0.5": float(np.quantile(sig, 0.5)),
                "0.975": float(np.quantile(sig, 0.975)),
            },
        }
    return summary


def run_experiment(cfg: RunConfig, resume_from=None) -> RunResult:
    """Execute one full run and write its outputs under cfg.out_dir."""
    t_start = time.perf_counter()
    exp = build_experiment(cfg)
    gammas: list = []
    sigma2s: list = []

    if resume_from is not None:
        state = load_checkpoint(resume_from)
        joint_start, flat_iters, warmup_iters, gammas, sigma2s = _restore_state(
            exp, state
        )
    else:
        joint_start = 0
        flat_iters = exp.wl.run_flat_phase(cfg.max_wl_iterations)
        warmup_iters = _store_warmup(exp, cfg)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "checkpoint.bin"
    interval = cfg.checkpoint_interval
    if interval and joint_start == 0:
        save_checkpoint(
            ckpt_path, _collect_state(exp, 0, flat_iters, warmup_iters, gammas, sigma2s)
        )

    wl, theta, store = exp.wl, exp.theta, exp.store
    for it in range(joint_start, cfg.theta_steps):
        gamma_used = wl.schedule.gamma
        wl.step()
        surface = store.snapshot(exp.particles, wl.c, exp.smooth)
        theta.step(surface)
        if exp.latent is not None:
            exp.latent.gibbs_pass(float(theta.theta[0]), exp.streams["latent"])
            sigma2s.append(exp.latent.sigma2)
        gammas.append(gamma_used)
        if interval and (it + 1) % interval == 0:
            save_checkpoint(
                ckpt_path,
                _collect_state(exp, it + 1, flat_iters, warmup_iters, gammas, sigma2s),
            )

    surface = store.snapshot(exp.particles, wl.c, exp.smooth)
    trace = theta.trace_array()
    accepts = np.array(theta.accepts, dtype=bool)
    log_accs = np.array(theta.log_accs)
    gammas_arr = np.array(gammas)
    sig_arr = np.array(sigma2s) if exp.latent is not None else None

    summary = _build_summary(
        exp, (trace, accepts, gammas_arr, sig_arr), flat_iters, warmup_iters
    )
    write_trace_csv(out_dir / "trace.csv", trace, accepts, log_accs, gammas_arr, sig_arr)
    write_logz_csv(out_dir / "logz.csv", surface, exp.model, cfg.surface_grid)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")

    return RunResult(
        cfg=cfg,
        exp=exp,
        out_dir=out_dir,
        trace=trace,
        accepts=accepts,
        log_accs=log_accs,
        gammas=gammas_arr,
        sigma2s=sig_arr,
        surface=surface,
        summary=summary,
        flat_iterations=flat_iters,
        warmup_iterations=warmup_iters,
        elapsed=time.perf_counter() - t_start,
    )


def run_surface(cfg: RunConfig, grid_spec: str = "") -> dict:
    """Learn the weight vector only (no theta chain) and export the surface.

    Runs the flat phase, then cfg.theta_steps recording iterations, then
    writes logz.csv and a small summary under cfg.out_dir.
    """
    t_start = time.perf_counter()
    exp = build_experiment(cfg)
    flat_iters = exp.wl.run_flat_phase(cfg.max_wl_iterations)
    for _ in range(cfg.theta_steps):
        exp.wl.step()
    surface = exp.store.snapshot(exp.particles, exp.wl.c, exp.smooth)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_logz_csv(out_dir / "logz.csv", surface, exp.model, grid_spec or cfg.surface_grid)
    summary = {
        "config": cfg.to_dict(),
        "wl": {
            "iterations": exp.wl.iteration,
            "flat_iterations": flat_iters,
            "halvings": len(exp.wl.halvings),
            "final_gamma": exp.wl.schedule.gamma,
            "phase": exp.wl.schedule.phase,
            "max_mass_residual": exp.wl.max_mass_residual,
            "bandwidth": exp.smooth.bandwidth,
            "records": int(exp.store.visits.sum()),
            "stored": int(exp.store.stored.sum()),
        },
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    summary["elapsed"] = time.perf_counter() - t_start
    return summary

"""Run configuration: a flat key=value file plus command-line overrides.

Example::

    # 3x3 lattice, full pipeline
    model = ising
    rows = 3
    cols = 3
    theta_true = 0.4
    d = 20
    theta_steps = 200000
    seed = 7

Unknown keys, malformed lines, and type mismatches raise with the line
number.  Every field has a default except ``seed``, which must be given.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass

MODELS = ("ising", "imageseg", "ergm")
PROPOSALS = ("reflected", "gaussian")
PARTICLE_SOURCES = ("uniform", "gaussian")

__all__ = ["RunConfig", "parse_config", "apply_overrides", "MODELS", "PROPOSALS"]


@dataclass
class RunConfig:
    model: str = "ising"
    rows: int = 3
    cols: int = 3
    theta_true: float = 0.4
    sigma_true: float = 0.5
    edge_file: str = ""  # empty: bundled Florentine business network
    stat_variant: str = "literal"

    d: int = 20
    particle_source: str = "uniform"
    particle_mean: float = 0.0
    particle_var: float = 5.0
    bandwidth: float = 0.0  # 0: median nearest-neighbor distance

    gamma0: float = 1.0
    eps1: float = 1e-3
    eps2: float = 0.2
    tail_exponent: float = 0.7
    max_wl_iterations: int = 20_000_000
    recenter_every: int = 10_000
    record_from_start: bool = False
    store_stride: int = 1
    store_warmup_samples: int = 8  # min stored samples per label before theta starts; 0: off
    sweeps_per_step: int = 1
    cftp_t_max: int = 1 << 20

    theta_steps: int = 10_000
    burn_in: int = 1999
    proposal: str = "reflected"
    proposal_width_frac: float = 0.1
    target_rate: float = 0.30
    adapt_exponent: float = 0.6
    cov_blend_after: int = 1000

    seed: int = -1
    out_dir: str = "out"
    checkpoint_interval: int = 0  # joint steps between checkpoints; 0: off
    surface_grid: str = ""  # "lo:hi:steps" for the exported grid, per axis
    max_lag: int = 50

    def validate(self) -> "RunConfig":
        if self.model not in MODELS:
            raise ValueError("model must be one of %s" % (MODELS,))
        if self.proposal not in PROPOSALS:
            raise ValueError("proposal must be one of %s" % (PROPOSALS,))
        if self.particle_source not in PARTICLE_SOURCES:
            raise ValueError("particle_source must be one of %s" % (PARTICLE_SOURCES,))
        if self.stat_variant not in ("literal", "standard"):
            raise ValueError("stat_variant must be 'literal' or 'standard'")
        if self.seed < 0:
            raise ValueError("seed is required and must be non-negative")
        if self.d < 2:
            raise ValueError("need at least two particles")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("lattice dimensions must be positive")
        if self.theta_steps < 1:
            raise ValueError("theta_steps must be positive")
        if not 0 <= self.burn_in:
            raise ValueError("burn_in must be non-negative")
        if self.store_warmup_samples < 0:
            raise ValueError("store_warmup_samples must be non-negative")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _field_types() -> dict:
    return typing.get_type_hints(RunConfig)


def _coerce(key: str, raw: str, typ):
    if typ is bool:
        val = raw.strip().lower()
        if val in ("true", "1", "yes", "on"):
            return True
        if val in ("false", "0", "no", "off"):
            return False
        raise ValueError("expected a boolean for %r, got %r" % (key, raw))
    if typ is int:
        try:
            return int(raw, 0)
        except ValueError:
            # accept 2e5-style scientific notation when it is integral
            f = float(raw)
            if f != int(f):
                raise ValueError("expected an integer for %r, got %r" % (key, raw)) from None
            return int(f)
    if typ is float:
        return float(raw)
    return raw.strip()


def _assign(cfg: RunConfig, key: str, raw: str, where: str):
    types = _field_types()
    if key not in types:
        raise ValueError("%s: unknown key %r" % (where, key))
    try:
        setattr(cfg, key, _coerce(key, raw, types[key]))
    except ValueError as exc:
        raise ValueError("%s: %s" % (where, exc)) from None


def parse_config(path) -> RunConfig:
    cfg = RunConfig()
    with open(path) as fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s:%d: expected key = value" % (path, lineno))
            key, _, raw = line.partition("=")
            _assign(cfg, key.strip(), raw.strip(), "%s:%d" % (path, lineno))
    return cfg


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    for item in overrides or ():
        if "=" not in item:
            raise ValueError("override %r: expected key=value" % (item,))
        key, _, raw = item.partition("=")
        _assign(cfg, key.strip(), raw.strip(), "override %r" % (item,))
    return cfg

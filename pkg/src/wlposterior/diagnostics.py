"""Post-run summaries of parameter traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BURN_IN = 1999

__all__ = ["DEFAULT_BURN_IN", "acf", "ChainSummary", "summarize"]


def acf(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation at lags 0..max_lag with the biased estimator: every
    lag's sum of products is divided by the lag-0 sum, so the sequence is a
    valid correlation function.  A constant series has no correlation
    structure to estimate and raises."""
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise ValueError("need at least two observations")
    if max_lag < 0 or max_lag >= x.size:
        raise ValueError("max_lag must lie in [0, len(series))")
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        raise ValueError("series is constant; autocorrelation undefined")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for lag in range(1, max_lag + 1):
        out[lag] = float(x[:-lag] @ x[lag:]) / denom
    return out


@dataclass
class ChainSummary:
    n_kept: int
    burn_in: int
    mean: np.ndarray
    std: np.ndarray
    quantiles: dict
    acceptance_rate: float
    acf: np.ndarray  # (q, max_lag + 1); NaN rows for constant coordinates
    max_lag: int

    def to_dict(self) -> dict:
        return {
            "n_kept": self.n_kept,
            "burn_in": self.burn_in,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "quantiles": {str(p): v.tolist() for p, v in self.quantiles.items()},
            "acceptance_rate": self.acceptance_rate,
            "acf": self.acf.tolist(),
            "max_lag": self.max_lag,
        }


def summarize(
    trace: np.ndarray,
    burn_in: int = DEFAULT_BURN_IN,
    accepts: np.ndarray | None = None,
    probs=(0.025, 0.25, 0.5, 0.75, 0.975),
    max_lag: int = 50,
) -> ChainSummary:
    """Moments, marginal quantiles, and autocorrelations of the post-burn-in
    trace.  Quantiles use linear interpolation between order statistics."""
    trace = np.asarray(trace, dtype=np.float64)
    if trace.ndim == 1:
        trace = trace[:, None]
    if burn_in < 0 or burn_in >= trace.shape[0]:
        raise ValueError("burn_in must leave at least one sample")
    kept = trace[burn_in:]
    n, q = kept.shape
    lag = min(max_lag, n - 1)
    rho = np.full((q, lag + 1), np.nan)
    for k in range(q):
        try:
            rho[k] = acf(kept[:, k], lag)
        except ValueError:
            pass  # constant coordinate: leave NaN
    if accepts is None:
        rate = float("nan")
    else:
        acc = np.asarray(accepts).reshape(-1)[burn_in:]
        rate = float(np.mean(acc)) if acc.size else float("nan")
    return ChainSummary(
        n_kept=n,
        burn_in=burn_in,
        mean=kept.mean(axis=0),
        std=kept.std(axis=0, ddof=1) if n > 1 else np.zeros(q),
        quantiles={
            float(p): np.quantile(kept, p, axis=0, method="linear") for p in probs
        },
        acceptance_rate=rate,
        acf=rho,
        max_lag=lag,
    )

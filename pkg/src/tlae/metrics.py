"""Forecast evaluation metrics.

Deterministic metrics over a target panel Y and prediction Yhat of the
same shape:

  wape   sum |yhat - y| / sum |y|
  mape   mean over cells with |y| > 0 of |yhat - y| / |y|
  smape  mean over cells with |y| > 0 of 2|yhat - y| / |yhat + y|
  mse    mean over all cells of (yhat - y)^2

Note smape's denominator is the absolute value of the sum, not the sum
of absolute values, and only cells with nonzero target contribute.

Probabilistic metrics are sample-based. quantile_loss scores a single
predictive quantile with D(q, y) = (rho - 1{q <= y}) (q - y), scaled by
2 / sum|y|. crps_pinball approximates the continuous ranked probability
score of the empirical sample distribution by averaging the symmetric
pinball loss over the quantile grid {i/(Q+1)}, i = 1..Q; crps_sum
applies it to the across-series sum.

Undefined conditions (zero denominators, empty samples) raise
MetricUndefinedError instead of returning NaN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import MetricUndefinedError, ShapeError


def _check_shapes(yhat, y):
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.shape != y.shape:
        raise ShapeError(f"metric: shape mismatch {yhat.shape} vs {y.shape}")
    return yhat, y


def wape(yhat, y) -> float:
    yhat, y = _check_shapes(yhat, y)
    denom = np.abs(y).sum()
    if denom == 0.0:
        raise MetricUndefinedError("wape: sum |y| is zero")
    return float(np.abs(yhat - y).sum() / denom)


def mape(yhat, y) -> float:
    yhat, y = _check_shapes(yhat, y)
    mask = np.abs(y) > 0.0
    m = int(mask.sum())
    if m == 0:
        raise MetricUndefinedError("mape: every target is zero")
    return float((np.abs(yhat - y)[mask] / np.abs(y)[mask]).sum() / m)


def smape(yhat, y) -> float:
    yhat, y = _check_shapes(yhat, y)
    mask = np.abs(y) > 0.0
    m = int(mask.sum())
    if m == 0:
        raise MetricUndefinedError("smape: every target is zero")
    denom = np.abs(yhat + y)[mask]
    if np.any(denom == 0.0):
        raise MetricUndefinedError("smape: yhat + y is zero on a contributing cell")
    return float((2.0 * np.abs(yhat - y)[mask] / denom).sum() / m)


def mse(yhat, y) -> float:
    yhat, y = _check_shapes(yhat, y)
    return float(np.mean((yhat - y) ** 2))


def quantile_loss(yhat_q, y, rho: float) -> float:
    """Scaled asymmetric error of a predictive rho-quantile."""
    if not 0.0 < rho < 1.0:
        raise MetricUndefinedError(f"quantile_loss: rho must be in (0,1), got {rho}")
    yhat_q, y = _check_shapes(yhat_q, y)
    denom = np.abs(y).sum()
    if denom == 0.0:
        raise MetricUndefinedError("quantile_loss: sum |y| is zero")
    d = (rho - (yhat_q <= y)) * (yhat_q - y)
    return float(2.0 * d.sum() / denom)


def _pinball(q, y, rho):
    # rho * (y - q) when q <= y, (1 - rho) * (q - y) otherwise
    return np.maximum(rho * (y - q), (rho - 1.0) * (y - q))


def crps_pinball(samples, y, n_quantiles: int = 20) -> float:
    """Mean CRPS of an empirical sample distribution against observations.

    samples has shape (S, *y.shape). Per cell the score is the average
    over the Q-point quantile grid of twice the pinball loss of the
    interpolated sample quantile; the result is the mean over cells.
    """
    samples = np.asarray(samples, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if samples.ndim != y.ndim + 1 or samples.shape[1:] != y.shape:
        raise ShapeError(f"crps: samples {samples.shape} do not stack over {y.shape}")
    s = samples.shape[0]
    if s == 0:
        raise MetricUndefinedError("crps: empty sample set")
    if n_quantiles < 1:
        raise MetricUndefinedError(f"crps: n_quantiles must be >= 1, got {n_quantiles}")
    if s < n_quantiles:
        raise MetricUndefinedError(f"crps: need at least {n_quantiles} samples, got {s}")
    levels = np.arange(1, n_quantiles + 1) / (n_quantiles + 1.0)
    qs = np.quantile(samples, levels, axis=0)  # (Q, *cells)
    pin = _pinball(qs, y[None, ...], levels.reshape((-1,) + (1,) * y.ndim))
    return float((2.0 * pin).mean())


def crps_sum(samples, y, n_quantiles: int = 20) -> float:
    """CRPS of the across-series sum: samples (S, n, H), targets (n, H)."""
    samples = np.asarray(samples, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if samples.ndim != 3 or y.ndim != 2 or samples.shape[1:] != y.shape:
        raise ShapeError(f"crps_sum: samples {samples.shape} do not stack over {y.shape}")
    return crps_pinball(samples.sum(axis=1), y.sum(axis=0), n_quantiles)


@dataclass
class MetricsReport:
    values: dict
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {"metrics": self.values, "metadata": self.metadata}
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        d = json.loads(text)
        return cls(values=d["metrics"], metadata=d.get("metadata", {}))

    def table(self) -> str:
        width = max((len(k) for k in self.values), default=6)
        lines = [f"{k.ljust(width)}  {v:.6f}" for k, v in sorted(self.values.items())]
        return "\n".join(lines)

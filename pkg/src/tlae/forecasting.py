"""Multi-step and rolling forecasting.

Point forecasts encode the context window, warm the LSTM over it from
zero state, then iterate the LSTM in latent space, feeding each
predicted latent back as the next input, and decode the predicted
latent path. The model is never retrained or updated here.

Probabilistic forecasts draw S latent samples N(mu, I) at each horizon
step and decode them. By default the rollout feeds the conditional mean
forward (samples only spread around the mean path); trajectory mode
instead feeds each member its own draw, which widens long-horizon
intervals.

Rolling evaluation over k windows always rebuilds the context from
actual observed values, so later windows see earlier windows' truth,
never the model's own predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DataError, ShapeError
from .model import ModelConfig, encode, decode, lstm_init_state, lstm_stack_step, project, _as_tensors
from .numeric import RngStream


@dataclass
class RollingSpec:
    horizon: int
    windows: int
    context_len: int
    samples: int = 100
    quantile_levels: tuple = (0.05, 0.5, 0.95)
    trajectory_sampling: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"rolling: horizon must be >= 1, got {self.horizon}")
        if self.windows < 1:
            raise ConfigError(f"rolling: windows must be >= 1, got {self.windows}")
        if self.context_len < 1:
            raise ConfigError(f"rolling: context_len must be >= 1, got {self.context_len}")
        if self.samples < 1:
            raise ConfigError(f"rolling: samples must be >= 1, got {self.samples}")
        levels = tuple(float(v) for v in self.quantile_levels)
        if any(not 0.0 < v < 1.0 for v in levels):
            raise ConfigError(f"rolling: quantile levels must lie in (0,1), got {levels}")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError(f"rolling: quantile levels must be strictly increasing, got {levels}")
        object.__setattr__(self, "quantile_levels", levels)


@dataclass
class ForecastEnsemble:
    """Point path, optional sample cube (S x n x H), and per-level quantiles."""

    point: np.ndarray
    samples: np.ndarray | None = None
    quantiles: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, point, samples, levels) -> "ForecastEnsemble":
        qs = {
            float(lv): np.quantile(samples, lv, axis=0, method="linear") for lv in levels
        }
        return cls(point=point, samples=samples, quantiles=qs)

    def concat(self, other: "ForecastEnsemble") -> "ForecastEnsemble":
        point = np.concatenate([self.point, other.point], axis=1)
        samples = None
        if self.samples is not None and other.samples is not None:
            samples = np.concatenate([self.samples, other.samples], axis=2)
        quantiles = {
            lv: np.concatenate([self.quantiles[lv], other.quantiles[lv]], axis=1)
            for lv in self.quantiles
        }
        return ForecastEnsemble(point=point, samples=samples, quantiles=quantiles)


def _warm_state(config: ModelConfig, p: dict, context: np.ndarray):
    """Encode the context and run the LSTM over all its columns.

    Returns (mu_next, hs, cs): the prediction for the first future step
    and the warmed state."""
    if context.shape[0] != config.input_dim:
        raise ShapeError(f"forecast: context has {context.shape[0]} rows, expected {config.input_dim}")
    if context.shape[1] < config.seq_len:
        raise ShapeError(
            f"forecast: context of {context.shape[1]} columns is shorter than seq_len {config.seq_len}"
        )
    X = encode(config, p, ad.constant(context))
    hs, cs = lstm_init_state(config)
    top = None
    for i in range(X.value.shape[1]):
        top, hs, cs = lstm_stack_step(config, p, ad.slice_cols(X, i, i + 1), hs, cs)
    return project(p, top), hs, cs


def _mean_rollout(config: ModelConfig, p: dict, context: np.ndarray, tau: int):
    """Latent mean path (list of (d,1) Tensors) for tau future steps."""
    mu, hs, cs = _warm_state(config, p, context)
    mus = [mu]
    for _ in range(tau - 1):
        top, hs, cs = lstm_stack_step(config, p, mus[-1], hs, cs)
        mus.append(project(p, top))
    return mus, hs, cs


def forecast_point(config: ModelConfig, params, context: np.ndarray, tau: int) -> np.ndarray:
    """Decode of the latent mean path: (n x tau)."""
    if tau < 1:
        raise ConfigError(f"forecast: tau must be >= 1, got {tau}")
    p = _as_tensors(params)
    mus, _, _ = _mean_rollout(config, p, np.asarray(context, dtype=np.float64), tau)
    return decode(config, p, ad.concat_cols(mus)).value.copy()


def forecast_ensemble(
    config: ModelConfig,
    params,
    context: np.ndarray,
    tau: int,
    n_samples: int,
    rng: RngStream,
    *,
    quantile_levels=(0.05, 0.5, 0.95),
    trajectory: bool = False,
) -> ForecastEnsemble:
    """Sampled forecast distribution around the latent mean path.

    Draws n_samples latent points N(mu_h, I) per horizon step and
    decodes them; the fed-forward latent is the mean unless trajectory
    mode is on, in which case each member feeds its own draw.
    """
    if config.mode != "probabilistic":
        raise ConfigError("forecast_ensemble requires a probabilistic-mode model")
    if n_samples < 1:
        raise ConfigError(f"forecast: sample count must be >= 1, got {n_samples}")
    if tau < 1:
        raise ConfigError(f"forecast: tau must be >= 1, got {tau}")
    p = _as_tensors(params)
    context = np.asarray(context, dtype=np.float64)
    d = config.latent_dim
    n = config.input_dim

    mus, hs, cs = _mean_rollout(config, p, context, tau)
    point = decode(config, p, ad.concat_cols(mus)).value.copy()

    if not trajectory:
        latent_draws = []
        for mu in mus:
            latent_draws.append(ad.constant(mu.value + rng.normal(d, n_samples)))
    else:
        mu1, hs, cs = _warm_state(config, p, context)
        tile = ad.constant(np.ones((1, n_samples)))
        hs = [ad.matmul(h, tile) for h in hs]
        cs = [ad.matmul(c, tile) for c in cs]
        draws = ad.constant(mu1.value + rng.normal(d, n_samples))
        latent_draws = [draws]
        for _ in range(tau - 1):
            top, hs, cs = lstm_stack_step(config, p, latent_draws[-1], hs, cs)
            mu_h = project(p, top)
            latent_draws.append(ad.constant(mu_h.value + rng.normal(d, n_samples)))

    stacked = ad.concat_cols(latent_draws)  # (d, tau * S)
    decoded = decode(config, p, stacked).value  # (n, tau * S)
    samples = decoded.reshape(n, tau, n_samples).transpose(2, 0, 1).copy()
    return ForecastEnsemble.from_samples(point, samples, quantile_levels)


def rolling_evaluate(
    config: ModelConfig,
    params,
    series: np.ndarray,
    spec: RollingSpec,
    rng: RngStream | None = None,
):
    """Forecast k consecutive windows of tau steps over the series tail.

    The final windows*horizon columns are the evaluation region; the
    context for window w is the actual data up to that window's start
    (truth from earlier evaluation windows re-enters as context).
    Returns (ForecastEnsemble over all windows, aligned actuals).
    """
    series = np.asarray(series, dtype=np.float64)
    n, total = series.shape
    tau, k, ctx = spec.horizon, spec.windows, spec.context_len
    needed = k * tau + ctx
    if total < needed:
        raise DataError(f"rolling: series has {total} steps, needs at least {needed} "
                        f"(context {ctx} + {k} windows x {tau})")
    start = total - k * tau
    probabilistic = config.mode == "probabilistic"
    if probabilistic and rng is None:
        raise ConfigError("rolling: probabilistic evaluation needs an RngStream")

    combined: ForecastEnsemble | None = None
    for w in range(k):
        t0 = start + w * tau
        context = series[:, t0 - ctx : t0]
        if probabilistic:
            piece = forecast_ensemble(
                config, params, context, tau, spec.samples, rng.child(1000 + w),
                quantile_levels=spec.quantile_levels, trajectory=spec.trajectory_sampling,
            )
        else:
            piece = ForecastEnsemble(point=forecast_point(config, params, context, tau))
        combined = piece if combined is None else combined.concat(piece)
    actuals = series[:, start:].copy()
    return combined, actuals

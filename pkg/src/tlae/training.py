"""End-to-end optimization loop.

Training slides fixed-size windows over the training region in time
order (no shuffling), one Adam step per window, and rebuilds the
computation graph for every window. The overall objective is the mean
of the per-window losses; the log records that mean per epoch.

When a validation holdout m > 0 is configured, the final m training
columns are never windowed over; after each epoch the model rolls
forecasts over them (point WAPE in deterministic mode, sampled CRPS-sum
in probabilistic mode) and the parameters from the best epoch are
returned alongside the final ones.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import metrics as met
from .errors import ConfigError, DataError, NumericError
from .forecasting import RollingSpec, rolling_evaluate
from .losses import loss_deterministic, loss_probabilistic, sample_with_frozen_noise
from .model import ModelConfig, ModelParams, decode, init_params, latent_path, save_checkpoint
from .numeric import RngStream


@dataclass
class TrainConfig:
    batch_size: int
    stride: int
    epochs: int
    learning_rate: float = 1e-4
    weight: float = 0.5  # loss balance between reconstruction and latent terms
    p: int = 1
    q: int = 2
    seed: int = 0
    validation_steps: int = 0
    validation_horizon: int | None = None
    validation_samples: int = 100
    val_every: int = 1
    grad_clip: float | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(f"train: batch_size must be >= 2, got {self.batch_size}")
        if self.stride < 1:
            raise ConfigError(f"train: stride must be >= 1, got {self.stride}")
        if self.epochs < 0:
            raise ConfigError(f"train: epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"train: learning_rate must be positive, got {self.learning_rate}")
        if self.weight < 0:
            raise ConfigError(f"train: loss weight must be nonnegative, got {self.weight}")
        if self.validation_steps < 0:
            raise ConfigError(f"train: validation_steps must be >= 0, got {self.validation_steps}")
        if self.val_every < 1:
            raise ConfigError(f"train: val_every must be >= 1, got {self.val_every}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"train: grad_clip must be positive when set, got {self.grad_clip}")


def make_windows(total: int, batch_size: int, stride: int) -> list:
    """Window start/end pairs [s, s+b) for s on the stride grid, s+b <= total."""
    if total < batch_size:
        raise DataError(f"windows: {total} time steps cannot fit one window of {batch_size}")
    return [(s, s + batch_size) for s in range(0, total - batch_size + 1, stride)]


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, params: ModelParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(params: ModelParams, grads: dict, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place."""
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NumericError(f"adam: non-finite gradient for {', '.join(sorted(bad))}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for k, arr in params.arrays.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * (g * g)
        arr -= lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + state.eps)


def _window_loss(config: ModelConfig, ptens: dict, window: np.ndarray, tc: TrainConfig,
                 eps: np.ndarray | None):
    """Build the graph for one window and return (total Tensor, breakdown)."""
    path = latent_path(config, ptens, window)
    head = ad.slice_cols(path.X, 0, config.seq_len)
    if config.mode == "probabilistic":
        latent_in = sample_with_frozen_noise(path, eps) if eps is not None else path.mu
        yhat = decode(config, ptens, ad.concat_cols([head, latent_in]))
        return loss_probabilistic(window, yhat, path, tc.weight, tc.p)
    yhat = decode(config, ptens, ad.concat_cols([head, path.Xhat]))
    return loss_deterministic(window, yhat, path, tc.weight, tc.p, tc.q)


def epoch_mean_loss(series: np.ndarray, params: ModelParams, config: ModelConfig,
                    tc: TrainConfig) -> float:
    """Mean loss over all training windows with parameters held fixed.

    Deterministic-mode bookkeeping oracle for the per-epoch log values."""
    train_cols = series.shape[1] - tc.validation_steps
    ptens = params.constants()
    totals = []
    for s, e in make_windows(train_cols, tc.batch_size, tc.stride):
        _, br = _window_loss(config, ptens, series[:, s:e], tc, None)
        totals.append(br.total)
    return float(np.mean(totals))


def _clip(grads: dict, max_norm: float) -> dict:
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if norm <= max_norm or norm == 0.0:
        return grads
    f = max_norm / norm
    return {k: g * f for k, g in grads.items()}


def _validation_metric(series, params, config, tc: TrainConfig, rng: RngStream):
    m = tc.validation_steps
    horizon = tc.validation_horizon or m
    if m % horizon != 0:
        raise ConfigError(f"train: validation_steps {m} not divisible by horizon {horizon}")
    spec = RollingSpec(
        horizon=horizon, windows=m // horizon, context_len=config.seq_len,
        samples=tc.validation_samples, quantile_levels=(0.05, 0.5, 0.95),
    )
    ens, actual = rolling_evaluate(config, params, series, spec,
                                   rng if config.mode == "probabilistic" else None)
    if config.mode == "probabilistic":
        return "val_crps_sum", met.crps_sum(ens.samples, actual)
    return "val_wape", met.wape(ens.point, actual)


@dataclass
class FitResult:
    params: ModelParams            # best validation epoch, or final when m = 0
    final_params: ModelParams
    log: list = field(default_factory=list)
    best_epoch: int | None = None
    best_metric: float | None = None


def fit(series: np.ndarray, config: ModelConfig, tc: TrainConfig, *,
        checkpoint_dir: str | None = None) -> FitResult:
    """Train on series[:, :T-m], validating on the held-out tail.

    The returned log has one record per epoch with the mean loss terms
    and validation metric. Raises NumericError on divergence after
    dumping the last finite parameters when a checkpoint_dir is given.
    """
    series = np.asarray(series, dtype=np.float64)
    n, total = series.shape
    if n != config.input_dim:
        raise ConfigError(f"train: series has {n} rows but model expects {config.input_dim}")
    m = tc.validation_steps
    if total < tc.batch_size + m:
        raise DataError(f"train: {total} steps cannot fit batch {tc.batch_size} plus holdout {m}")
    if tc.batch_size <= config.seq_len:
        raise ConfigError(f"train: batch_size {tc.batch_size} must exceed seq_len {config.seq_len}")

    params = init_params(config, RngStream(tc.seed, 0))
    noise = RngStream(tc.seed, 1)
    val_rng = RngStream(tc.seed, 2)
    state = AdamState(params)
    windows = make_windows(total - m, tc.batch_size, tc.stride)

    log: list[dict] = []
    best: ModelParams | None = None
    best_epoch = None
    best_metric = None
    for epoch in range(1, tc.epochs + 1):
        t0 = time.monotonic()
        sums = {"total": 0.0, "recon": 0.0, "latent": 0.0}
        for s, e in windows:
            window = series[:, s:e]
            eps = None
            if config.mode == "probabilistic":
                eps = noise.normal(config.latent_dim, tc.batch_size - config.seq_len)
            ptens = params.tensors()
            with ad.record_tape() as tape:
                loss, br = _window_loss(config, ptens, window, tc, eps)
            if not np.isfinite(br.total):
                if checkpoint_dir is not None:
                    save_checkpoint(f"{checkpoint_dir}/checkpoint_diverged_last_good.tlae", params)
                raise NumericError(
                    f"train: loss became non-finite at epoch {epoch}, window [{s},{e})"
                )
            grads = ad.backward(loss, ptens, tape=tape)
            if tc.grad_clip is not None:
                grads = _clip(grads, tc.grad_clip)
            adam_step(params, grads, state, tc.learning_rate)
            sums["total"] += br.total
            sums["recon"] += br.recon
            sums["latent"] += br.latent
        record = {
            "epoch": epoch,
            "train_total": sums["total"] / len(windows),
            "train_recon": sums["recon"] / len(windows),
            "train_latent": sums["latent"] / len(windows),
        }
        if m > 0 and (epoch % tc.val_every == 0 or epoch == tc.epochs):
            name, value = _validation_metric(series, params, config, tc, val_rng.child(epoch))
            record[name] = value
            if best_metric is None or value < best_metric:
                best_metric = value
                best_epoch = epoch
                best = params.copy()
        record["wall_time_s"] = time.monotonic() - t0
        log.append(record)

    final = params
    chosen = best if best is not None else final
    return FitResult(params=chosen, final_params=final, log=log,
                     best_epoch=best_epoch, best_metric=best_metric)

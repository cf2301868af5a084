"""Temporal latent autoencoder for multivariate time series forecasting.

A nonlinear encoder compresses a high-dimensional panel into a few
latent series, a stacked LSTM learns their dynamics, and a decoder maps
latent predictions back to the input space; the whole pipeline trains
end to end with either a deterministic or a probabilistic objective.
"""

from .data import Dataset, SyntheticSpec, load_csv, make_synthetic, normalize, save_csv
from .forecasting import ForecastEnsemble, RollingSpec, forecast_ensemble, forecast_point, rolling_evaluate
from .losses import LossBreakdown, loss_deterministic, loss_probabilistic, reparameterize
from .metrics import MetricsReport, crps_pinball, crps_sum, mape, mse, quantile_loss, smape, wape
from .model import ModelConfig, ModelParams, forward_batch, init_params, load_checkpoint, save_checkpoint
from .numeric import RngStream
from .training import AdamState, FitResult, TrainConfig, adam_step, fit, make_windows

__version__ = "0.1.0"

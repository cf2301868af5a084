"""Run configuration: a single JSON file with strict schema validation.

Unknown keys are rejected with their full path so typos in field names
(for example a misspelled "lambda") can never silently fall back to a
default. The resolved configuration is echoed next to every run's
outputs together with a content hash; re-running from the echo file
reproduces the run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .data import SyntheticSpec
from .errors import ConfigError

_METRICS_DETERMINISTIC = ("wape", "mape", "smape", "mse")
_METRICS_PROBABILISTIC = ("wape", "mape", "smape", "mse", "crps", "crps_sum", "quantile_loss")


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"config: missing required field {path}.{key}")
    return d[key]


def _check_keys(d: dict, allowed, path: str):
    if not isinstance(d, dict):
        raise ConfigError(f"config: {path} must be an object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"config: unknown field {path}.{unknown[0]}")


def _typed(v, types, path: str, what: str):
    if isinstance(v, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"config: {path} must be {what}")
    if not isinstance(v, types):
        raise ConfigError(f"config: {path} must be {what}")
    return v


def _int(d, key, path, default=None, minimum=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"config: missing required field {path}.{key}")
        return default
    v = _typed(d[key], int, f"{path}.{key}", "an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"config: {path}.{key} must be >= {minimum}, got {v}")
    return v


def _num(d, key, path, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"config: missing required field {path}.{key}")
        return float(default)
    return float(_typed(d[key], (int, float), f"{path}.{key}", "a number"))


@dataclass
class DatasetSection:
    csv_path: str | None = None
    timestamp_column: bool | None = None
    synthetic: SyntheticSpec | None = None
    normalization: str = "none"

    @classmethod
    def parse(cls, d: dict) -> "DatasetSection":
        _check_keys(d, ("csv_path", "timestamp_column", "synthetic", "normalization"), "dataset")
        csv_path = d.get("csv_path")
        synth = None
        if "synthetic" in d:
            s = d["synthetic"]
            _check_keys(
                s,
                ("n", "T", "latent_dim", "mixing", "noise_std", "seed", "mixing_weights", "offsets"),
                "dataset.synthetic",
            )
            synth = SyntheticSpec(
                n=_int(s, "n", "dataset.synthetic", minimum=1),
                T=_int(s, "T", "dataset.synthetic", minimum=2),
                latent_dim=_int(s, "latent_dim", "dataset.synthetic", minimum=1),
                mixing=s.get("mixing", "nonlinear"),
                noise_std=_num(s, "noise_std", "dataset.synthetic", default=0.02),
                seed=_int(s, "seed", "dataset.synthetic", default=0, minimum=0),
                mixing_weights=s.get("mixing_weights"),
                offsets=s.get("offsets"),
            )
        if (csv_path is None) == (synth is None):
            raise ConfigError("config: dataset needs exactly one of csv_path or synthetic")
        norm = d.get("normalization", "none")
        if norm not in ("none", "per-series-standardize"):
            raise ConfigError(f"config: dataset.normalization must be 'none' or "
                              f"'per-series-standardize', got {norm!r}")
        ts = d.get("timestamp_column")
        if ts is not None:
            ts = _typed(ts, bool, "dataset.timestamp_column", "a boolean")
        return cls(csv_path=csv_path, timestamp_column=ts, synthetic=synth, normalization=norm)

    def to_dict(self) -> dict:
        out: dict = {"normalization": self.normalization}
        if self.csv_path is not None:
            out["csv_path"] = self.csv_path
        if self.timestamp_column is not None:
            out["timestamp_column"] = self.timestamp_column
        if self.synthetic is not None:
            out["synthetic"] = self.synthetic.to_dict()
        return out


@dataclass
class ModelSection:
    encoder_dims: list
    seq_len: int
    lstm_layers: int = 1
    lstm_hidden: int = 32
    mode: str = "deterministic"
    activation: str = "relu"

    @classmethod
    def parse(cls, d: dict) -> "ModelSection":
        _check_keys(
            d, ("encoder_dims", "seq_len", "lstm_layers", "lstm_hidden", "mode", "activation"),
            "model",
        )
        dims = _require(d, "encoder_dims", "model")
        if not isinstance(dims, list) or not dims or not all(
            isinstance(v, int) and v > 0 for v in dims
        ):
            raise ConfigError("config: model.encoder_dims must be a nonempty list of positive integers")
        mode = d.get("mode", "deterministic")
        if mode not in ("deterministic", "probabilistic"):
            raise ConfigError(f"config: model.mode must be deterministic or probabilistic, got {mode!r}")
        act = d.get("activation", "relu")
        if act not in ("relu", "linear"):
            raise ConfigError(f"config: model.activation must be relu or linear, got {act!r}")
        return cls(
            encoder_dims=list(dims),
            seq_len=_int(d, "seq_len", "model", minimum=1),
            lstm_layers=_int(d, "lstm_layers", "model", default=1, minimum=1),
            lstm_hidden=_int(d, "lstm_hidden", "model", default=32, minimum=1),
            mode=mode,
            activation=act,
        )

    def to_dict(self) -> dict:
        return {
            "encoder_dims": self.encoder_dims, "seq_len": self.seq_len,
            "lstm_layers": self.lstm_layers, "lstm_hidden": self.lstm_hidden,
            "mode": self.mode, "activation": self.activation,
        }


@dataclass
class TrainSection:
    batch_size: int
    stride: int
    epochs: int
    learning_rate: float = 1e-4
    weight: float | None = None      # JSON key "lambda"; default depends on mode
    p: int = 1
    q: int = 2
    validation_steps: int = 0
    validation_horizon: int | None = None
    validation_samples: int = 100
    val_every: int = 1
    grad_clip: float | None = None

    _KEYS = (
        "batch_size", "stride", "epochs", "learning_rate", "lambda", "p", "q",
        "validation_steps", "validation_horizon", "validation_samples", "val_every", "grad_clip",
    )

    @classmethod
    def parse(cls, d: dict) -> "TrainSection":
        _check_keys(d, cls._KEYS, "train")
        weight = None
        if "lambda" in d:
            weight = _num(d, "lambda", "train")
            if weight < 0:
                raise ConfigError(f"config: train.lambda must be >= 0, got {weight}")
        vh = d.get("validation_horizon")
        if vh is not None:
            vh = _int(d, "validation_horizon", "train", minimum=1)
        gc = d.get("grad_clip")
        if gc is not None:
            gc = _num(d, "grad_clip", "train")
        p = _int(d, "p", "train", default=1)
        q = _int(d, "q", "train", default=2)
        if p not in (1, 2) or q not in (1, 2):
            raise ConfigError(f"config: train.p and train.q must be 1 or 2, got p={p}, q={q}")
        return cls(
            batch_size=_int(d, "batch_size", "train", minimum=2),
            stride=_int(d, "stride", "train", minimum=1),
            epochs=_int(d, "epochs", "train", minimum=0),
            learning_rate=_num(d, "learning_rate", "train", default=1e-4),
            weight=weight, p=p, q=q,
            validation_steps=_int(d, "validation_steps", "train", default=0, minimum=0),
            validation_horizon=vh,
            validation_samples=_int(d, "validation_samples", "train", default=100, minimum=1),
            val_every=_int(d, "val_every", "train", default=1, minimum=1),
            grad_clip=gc,
        )

    def resolved_weight(self, mode: str) -> float:
        if self.weight is not None:
            return self.weight
        return 0.5 if mode == "deterministic" else 0.005

    def to_dict(self, mode: str) -> dict:
        out = {
            "batch_size": self.batch_size, "stride": self.stride, "epochs": self.epochs,
            "learning_rate": self.learning_rate, "lambda": self.resolved_weight(mode),
            "p": self.p, "q": self.q, "validation_steps": self.validation_steps,
            "validation_samples": self.validation_samples, "val_every": self.val_every,
        }
        if self.validation_horizon is not None:
            out["validation_horizon"] = self.validation_horizon
        if self.grad_clip is not None:
            out["grad_clip"] = self.grad_clip
        return out


@dataclass
class EvalSection:
    horizon: int
    windows: int
    samples: int = 1000
    quantile_levels: list = field(default_factory=lambda: [0.05, 0.5, 0.95])
    crps_quantiles: int = 20
    metrics: list | None = None
    trajectory_sampling: bool = False
    plot_series: int = 6

    _KEYS = (
        "horizon", "windows", "samples", "quantile_levels", "crps_quantiles", "metrics",
        "trajectory_sampling", "plot_series",
    )

    @classmethod
    def parse(cls, d: dict) -> "EvalSection":
        _check_keys(d, cls._KEYS, "eval")
        levels = d.get("quantile_levels", [0.05, 0.5, 0.95])
        if not isinstance(levels, list) or not all(
            isinstance(v, (int, float)) and 0.0 < float(v) < 1.0 for v in levels
        ):
            raise ConfigError("config: eval.quantile_levels must be a list of numbers in (0,1)")
        levels = [float(v) for v in levels]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError("config: eval.quantile_levels must be strictly increasing")
        metrics = d.get("metrics")
        if metrics is not None:
            if not isinstance(metrics, list) or not all(isinstance(v, str) for v in metrics):
                raise ConfigError("config: eval.metrics must be a list of metric names")
            for v in metrics:
                if v not in _METRICS_PROBABILISTIC:
                    raise ConfigError(f"config: eval.metrics has unknown metric {v!r}")
        return cls(
            horizon=_int(d, "horizon", "eval", minimum=1),
            windows=_int(d, "windows", "eval", minimum=1),
            samples=_int(d, "samples", "eval", default=1000, minimum=1),
            quantile_levels=levels,
            crps_quantiles=_int(d, "crps_quantiles", "eval", default=20, minimum=1),
            metrics=metrics,
            trajectory_sampling=bool(d.get("trajectory_sampling", False)),
            plot_series=_int(d, "plot_series", "eval", default=6, minimum=0),
        )

    def resolved_metrics(self, mode: str) -> list:
        if self.metrics is not None:
            allowed = _METRICS_DETERMINISTIC if mode == "deterministic" else _METRICS_PROBABILISTIC
            bad = [m for m in self.metrics if m not in allowed]
            if bad:
                raise ConfigError(
                    f"config: metric {bad[0]!r} needs a probabilistic-mode model"
                )
            return list(self.metrics)
        if mode == "deterministic":
            return ["wape", "mape", "smape", "mse"]
        return ["wape", "mape", "smape", "mse", "crps", "crps_sum"]

    def to_dict(self) -> dict:
        out = {
            "horizon": self.horizon, "windows": self.windows, "samples": self.samples,
            "quantile_levels": self.quantile_levels, "crps_quantiles": self.crps_quantiles,
            "trajectory_sampling": self.trajectory_sampling, "plot_series": self.plot_series,
        }
        if self.metrics is not None:
            out["metrics"] = self.metrics
        return out


@dataclass
class RunConfig:
    dataset: DatasetSection
    model: ModelSection
    train: TrainSection
    eval: EvalSection
    output_dir: str
    seed: int = 0

    @classmethod
    def parse(cls, d: dict) -> "RunConfig":
        _check_keys(d, ("dataset", "model", "train", "eval", "output_dir", "seed"), "config")
        rc = cls(
            dataset=DatasetSection.parse(_require(d, "dataset", "config")),
            model=ModelSection.parse(_require(d, "model", "config")),
            train=TrainSection.parse(_require(d, "train", "config")),
            eval=EvalSection.parse(_require(d, "eval", "config")),
            output_dir=str(_require(d, "output_dir", "config")),
            seed=_int(d, "seed", "config", default=0, minimum=0),
        )
        if rc.train.batch_size <= rc.model.seq_len:
            raise ConfigError(
                f"config: train.batch_size ({rc.train.batch_size}) must exceed "
                f"model.seq_len ({rc.model.seq_len})"
            )
        if rc.train.validation_horizon is not None and rc.train.validation_steps > 0:
            if rc.train.validation_steps % rc.train.validation_horizon != 0:
                raise ConfigError(
                    "config: train.validation_steps must be a multiple of train.validation_horizon"
                )
        return rc

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(self.model.mode),
            "eval": self.eval.to_dict(),
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: {path} is not valid JSON: {e}") from e
    if "config" in raw and isinstance(raw.get("config"), dict) and "config_hash" in raw:
        raw = raw["config"]  # accept an echo file as a config
    return RunConfig.parse(raw)

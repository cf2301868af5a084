"""The forecasting model: feed-forward encoder/decoder around a latent LSTM.

A batch window Y (n x b) is encoded column-wise to latents X (d x b).
A stacked LSTM consumes the latent columns x_1..x_{b-1} from a zero
initial state; the first L-1 steps are burn-in, and from step L onward
the top hidden state is projected to a next-latent prediction, giving
Xhat (d x (b-L)) where column j predicts the latent at window index
L+1+j (1-based). The decoder maps L encoder latents followed by the
LSTM predictions back to the input space, producing the two-part
output: reconstruction columns 1..L and prediction columns L+1..b.

All forward functions build autodiff graphs; pass a ModelParams to get
a constant (inference) graph or a dict of parameter Tensors from
`ModelParams.tensors()` to get a differentiable one.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DataError, ShapeError
from .numeric import RngStream

CHECKPOINT_MAGIC = b"TLAE"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("relu", "linear")
_MODES = ("deterministic", "probabilistic")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    encoder_dims: tuple
    seq_len: int
    lstm_layers: int = 1
    lstm_hidden: int = 32
    mode: str = "deterministic"
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "encoder_dims", tuple(int(d) for d in self.encoder_dims))
        if not self.encoder_dims:
            raise ConfigError("model: encoder_dims must be nonempty")
        if any(d < 1 for d in self.encoder_dims):
            raise ConfigError(f"model: encoder_dims must be positive, got {self.encoder_dims}")
        # The intended regime is latent_dim << input_dim; equality is
        # allowed so identity constructions remain expressible.
        if self.encoder_dims[-1] > self.input_dim:
            raise ConfigError(
                f"model: latent dim {self.encoder_dims[-1]} exceeds input dim {self.input_dim}"
            )
        if self.seq_len < 1:
            raise ConfigError(f"model: seq_len must be >= 1, got {self.seq_len}")
        if self.lstm_layers < 1:
            raise ConfigError(f"model: lstm_layers must be >= 1, got {self.lstm_layers}")
        if self.lstm_hidden < 1:
            raise ConfigError(f"model: lstm_hidden must be >= 1, got {self.lstm_hidden}")
        if self.mode not in _MODES:
            raise ConfigError(f"model: mode must be one of {_MODES}, got {self.mode!r}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"model: activation must be one of {_ACTIVATIONS}, got {self.activation!r}")

    @property
    def latent_dim(self) -> int:
        return self.encoder_dims[-1]

    @property
    def decoder_dims(self) -> tuple:
        """Hidden sizes of the decoder: encoder sizes reversed, ending at input_dim."""
        return tuple(reversed(self.encoder_dims[:-1])) + (self.input_dim,)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "encoder_dims": list(self.encoder_dims),
            "seq_len": self.seq_len,
            "lstm_layers": self.lstm_layers,
            "lstm_hidden": self.lstm_hidden,
            "mode": self.mode,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            input_dim=int(d["input_dim"]),
            encoder_dims=tuple(d["encoder_dims"]),
            seq_len=int(d["seq_len"]),
            lstm_layers=int(d["lstm_layers"]),
            lstm_hidden=int(d["lstm_hidden"]),
            mode=str(d["mode"]),
            activation=str(d["activation"]),
        )


@dataclass
class LatentPath:
    """Latents of one window: encoder output X (d x b) and LSTM
    predictions Xhat (d x (b-L)). In probabilistic mode Xhat is the
    per-step conditional mean, exposed as `mu`."""

    X: ad.Tensor
    Xhat: ad.Tensor

    @property
    def mu(self) -> ad.Tensor:
        return self.Xhat


class ModelParams:
    """All learnable weights, as an ordered name -> float64 array map."""

    def __init__(self, config: ModelConfig, arrays: dict):
        self.config = config
        self.arrays = arrays

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def tensors(self) -> dict:
        """Fresh differentiable parameter Tensors sharing nothing with self."""
        return {k: ad.parameter(v.copy(), name=k) for k, v in self.arrays.items()}

    def constants(self) -> dict:
        return {k: ad.constant(v, name=k) for k, v in self.arrays.items()}

    def names(self):
        return list(self.arrays.keys())


def _param_shapes(config: ModelConfig) -> list:
    shapes = []
    prev = config.input_dim
    for i, d in enumerate(config.encoder_dims):
        shapes.append((f"enc{i}.W", (d, prev)))
        shapes.append((f"enc{i}.b", (d, 1)))
        prev = d
    for i, d in enumerate(config.decoder_dims):
        shapes.append((f"dec{i}.W", (d, prev)))
        shapes.append((f"dec{i}.b", (d, 1)))
        prev = d
    h = config.lstm_hidden
    in_dim = config.latent_dim
    for layer in range(config.lstm_layers):
        shapes.append((f"lstm{layer}.W", (4 * h, in_dim + h)))
        shapes.append((f"lstm{layer}.b", (4 * h, 1)))
        in_dim = h
    shapes.append(("proj.W", (config.latent_dim, h)))
    shapes.append(("proj.b", (config.latent_dim, 1)))
    return shapes


def init_params(config: ModelConfig, rng: RngStream) -> ModelParams:
    """Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, zero biases,
    except LSTM forget-gate biases which start at 1.0."""
    arrays = {}
    h = config.lstm_hidden
    for name, shape in _param_shapes(config):
        if name.endswith(".b"):
            b = np.zeros(shape)
            if name.startswith("lstm"):
                b[h : 2 * h, 0] = 1.0  # gate row order: input, forget, candidate, output
            arrays[name] = b
        else:
            bound = 1.0 / np.sqrt(shape[1])
            arrays[name] = rng.uniform(-bound, bound, shape)
    return ModelParams(config, arrays)


def _as_tensors(params) -> dict:
    if isinstance(params, ModelParams):
        return params.constants()
    return params


def _ffn(p: dict, prefix: str, n_layers: int, activation: str, inp: ad.Tensor) -> ad.Tensor:
    out = inp
    for i in range(n_layers):
        out = ad.add_bias(ad.matmul(p[f"{prefix}{i}.W"], out), p[f"{prefix}{i}.b"])
        if activation == "relu" and i < n_layers - 1:
            out = ad.relu(out)
    return out


def encode(config: ModelConfig, params, Y) -> ad.Tensor:
    """Column-wise encoder application: (n x b) -> (d x b)."""
    p = _as_tensors(params)
    t = Y if isinstance(Y, ad.Tensor) else ad.constant(Y)
    if t.value.shape[0] != config.input_dim:
        raise ShapeError(f"encode: expected {config.input_dim} rows, got {t.value.shape[0]}")
    return _ffn(p, "enc", len(config.encoder_dims), config.activation, t)


def decode(config: ModelConfig, params, X) -> ad.Tensor:
    """Column-wise decoder application: (d x b) -> (n x b)."""
    p = _as_tensors(params)
    t = X if isinstance(X, ad.Tensor) else ad.constant(X)
    if t.value.shape[0] != config.latent_dim:
        raise ShapeError(f"decode: expected {config.latent_dim} rows, got {t.value.shape[0]}")
    return _ffn(p, "dec", len(config.decoder_dims), config.activation, t)


def lstm_init_state(config: ModelConfig, cols: int = 1):
    zero = lambda: ad.constant(np.zeros((config.lstm_hidden, cols)))
    return [zero() for _ in range(config.lstm_layers)], [zero() for _ in range(config.lstm_layers)]


def lstm_stack_step(config: ModelConfig, p: dict, x_t: ad.Tensor, hs: list, cs: list):
    """One time step through all layers; returns (top hidden, new hs, new cs).

    x_t has shape (d x m); m parallel columns run m independent state
    streams (used for trajectory sampling)."""
    hdim = config.lstm_hidden
    inp = x_t
    new_hs, new_cs = [], []
    for layer in range(config.lstm_layers):
        pre = ad.add_bias(
            ad.matmul(p[f"lstm{layer}.W"], ad.concat_rows([inp, hs[layer]])), p[f"lstm{layer}.b"]
        )
        i_g = ad.sigmoid(ad.slice_rows(pre, 0, hdim))
        f_g = ad.sigmoid(ad.slice_rows(pre, hdim, 2 * hdim))
        g_g = ad.tanh(ad.slice_rows(pre, 2 * hdim, 3 * hdim))
        o_g = ad.sigmoid(ad.slice_rows(pre, 3 * hdim, 4 * hdim))
        c_new = ad.add(ad.mul(f_g, cs[layer]), ad.mul(i_g, g_g))
        h_new = ad.mul(o_g, ad.tanh(c_new))
        new_hs.append(h_new)
        new_cs.append(c_new)
        inp = h_new
    return inp, new_hs, new_cs


def project(p: dict, h_top: ad.Tensor) -> ad.Tensor:
    return ad.add_bias(ad.matmul(p["proj.W"], h_top), p["proj.b"])


def lstm_forecast(config: ModelConfig, params, X) -> ad.Tensor:
    """One-step-ahead latent predictions over a window.

    Consumes latent columns x_1..x_{b-1} from zero state; steps before
    L are burn-in. Returns (d x (b-L)): column j is the prediction for
    window index L+1+j (1-based), so causality holds by construction.
    """
    p = _as_tensors(params)
    t = X if isinstance(X, ad.Tensor) else ad.constant(X)
    b = t.value.shape[1]
    L = config.seq_len
    if b <= L:
        raise ShapeError(f"lstm_forecast: window of {b} columns is too short for seq_len {L}")
    hs, cs = lstm_init_state(config)
    outs = []
    for i in range(b - 1):
        x_i = ad.slice_cols(t, i, i + 1)
        top, hs, cs = lstm_stack_step(config, p, x_i, hs, cs)
        if i >= L - 1:
            outs.append(project(p, top))
    return ad.concat_cols(outs)


def latent_path(config: ModelConfig, params, Y) -> LatentPath:
    p = _as_tensors(params)
    X = encode(config, p, Y)
    return LatentPath(X=X, Xhat=lstm_forecast(config, p, X))


def forward_batch(config: ModelConfig, params, Y):
    """Full deterministic forward pass over one window.

    Returns (Yhat, path): Yhat columns 1..L decode the encoder latents,
    columns L+1..b decode the LSTM predictions.
    """
    p = _as_tensors(params)
    path = latent_path(config, p, Y)
    dec_in = ad.concat_cols([ad.slice_cols(path.X, 0, config.seq_len), path.Xhat])
    return decode(config, p, dec_in), path


# ---------------------------------------------------------- checkpoints


def save_checkpoint(path: str, params: ModelParams) -> None:
    """Versioned binary container: magic, version, JSON header with the
    model config and array shapes, then raw little-endian float64 data.
    Written atomically (temp file + rename); byte-identical for
    identical parameters."""
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in params.arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(CHECKPOINT_VERSION.to_bytes(4, "little"))
            f.write(len(blob).to_bytes(8, "little"))
            f.write(blob)
            for v in params.arrays.values():
                f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> ModelParams:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"checkpoint {path}: bad magic {magic!r}")
        version = int.from_bytes(f.read(4), "little")
        if version != CHECKPOINT_VERSION:
            raise DataError(f"checkpoint {path}: unsupported version {version}")
        hlen = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(hlen).decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape))
            buf = f.read(n * 8)
            if len(buf) != n * 8:
                raise DataError(f"checkpoint {path}: truncated array {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return ModelParams(config, arrays)


def checkpoint_hash(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

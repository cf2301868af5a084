"""Dataset ingestion, splitting, normalization, and synthetic fixtures.

CSV layout: one row per time step, one column per series, header row
with series names; an optional leading timestamp column (header named
timestamp/time/date/datetime/ds, any case) is carried as labels only.
Values must parse as finite floats; missing or malformed cells abort
ingestion with their position. Matrices are stored series-by-row
(n x T).
"""

from __future__ import annotations

import csv
import io
import itertools
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .numeric import RngStream

_TIMESTAMP_NAMES = {"timestamp", "time", "date", "datetime", "ds"}

SYNTHETIC_VERSION = 1


@dataclass
class Dataset:
    values: np.ndarray              # (n, T)
    names: list
    frequency: str = ""
    timestamps: list | None = None
    train_end: int | None = None    # columns [0, train_end) may be used for fitting
    test_horizon: int | None = None
    test_windows: int | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def with_split(self, horizon: int, windows: int) -> "Dataset":
        """Reserve the final horizon*windows columns as the test region."""
        test = horizon * windows
        if test >= self.T:
            raise DataError(f"split: test region {test} does not fit in {self.T} steps")
        return Dataset(
            values=self.values, names=self.names, frequency=self.frequency,
            timestamps=self.timestamps, train_end=self.T - test,
            test_horizon=horizon, test_windows=windows,
        )


def load_csv(path: str, timestamp_column: bool | None = None) -> Dataset:
    """Parse a dataset file; `timestamp_column=None` detects it from the header."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"load_csv: cannot read {path}: {e}") from e
    return _parse_rows(rows, path, timestamp_column)


def _parse_rows(rows, origin: str, timestamp_column: bool | None) -> Dataset:
    if not rows or (len(rows) == 1 and not any(rows[0])):
        raise DataError(f"load_csv: {origin} is empty")
    header = rows[0]
    if timestamp_column is None:
        timestamp_column = bool(header) and header[0].strip().lower() in _TIMESTAMP_NAMES
    names = header[1:] if timestamp_column else header
    if not names:
        raise DataError(f"load_csv: {origin} has no series columns")
    width = len(header)
    data = np.empty((len(rows) - 1, len(names)))
    stamps: list | None = [] if timestamp_column else None
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataError(f"load_csv: {origin} row {r} has {len(row)} fields, expected {width}")
        cells = row[1:] if timestamp_column else row
        if timestamp_column:
            stamps.append(row[0])
        for c, cell in enumerate(cells):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"load_csv: {origin} row {r}, column '{names[c]}': not numeric: {cell!r}"
                ) from None
            if not np.isfinite(v):
                raise DataError(f"load_csv: {origin} row {r}, column '{names[c]}': non-finite value")
            data[r - 2, c] = v
    if data.shape[0] == 0:
        raise DataError(f"load_csv: {origin} has a header but no data rows")
    return Dataset(values=np.ascontiguousarray(data.T), names=list(names), timestamps=stamps)


def save_csv(ds: Dataset, path: str) -> None:
    """Inverse of load_csv; floats are written with shortest round-trip repr."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        if ds.timestamps is not None:
            w.writerow(["timestamp"] + list(ds.names))
            for t in range(ds.T):
                w.writerow([ds.timestamps[t]] + [repr(float(v)) for v in ds.values[:, t]])
        else:
            w.writerow(list(ds.names))
            for t in range(ds.T):
                w.writerow([repr(float(v)) for v in ds.values[:, t]])


@dataclass
class Normalizer:
    """Per-series affine transform fitted on the training range only."""

    scheme: str
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def apply(self, values: np.ndarray) -> np.ndarray:
        if self.scheme == "none":
            return values
        return (values - self.mean[:, None]) / self.std[:, None]

    def invert(self, values: np.ndarray) -> np.ndarray:
        if self.scheme == "none":
            return values
        return values * self.std[:, None] + self.mean[:, None]

    def invert_samples(self, samples: np.ndarray) -> np.ndarray:
        if self.scheme == "none":
            return samples
        return samples * self.std[None, :, None] + self.mean[None, :, None]


def normalize(ds: Dataset, scheme: str = "none"):
    """Returns (transformed dataset, Normalizer). Statistics come from
    columns [0, train_end) so the held-out tail never leaks in."""
    if scheme not in ("none", "per-series-standardize"):
        raise ConfigError(f"normalize: unknown scheme {scheme!r}")
    if scheme == "none":
        return ds, Normalizer(scheme="none")
    end = ds.train_end if ds.train_end is not None else ds.T
    train = ds.values[:, :end]
    mean = train.mean(axis=1)
    std = train.std(axis=1)
    flat = np.nonzero(std == 0.0)[0]
    if flat.size:
        bad = ", ".join(str(ds.names[i]) for i in flat)
        raise DataError(f"normalize: zero variance on training range for series: {bad}")
    norm = Normalizer(scheme=scheme, mean=mean, std=std)
    out = Dataset(
        values=norm.apply(ds.values), names=ds.names, frequency=ds.frequency,
        timestamps=ds.timestamps, train_end=ds.train_end,
        test_horizon=ds.test_horizon, test_windows=ds.test_windows,
    )
    return out, norm


@dataclass
class SyntheticSpec:
    n: int
    T: int
    latent_dim: int
    mixing: str = "nonlinear"
    noise_std: float = 0.02
    seed: int = 0
    mixing_weights: list | None = None   # explicit (n x latent_dim), linear mixing only
    offsets: list | None = None

    def __post_init__(self):
        if self.latent_dim > self.n:
            raise ConfigError(f"synthetic: latent_dim {self.latent_dim} exceeds n {self.n}")
        if self.noise_std < 0:
            raise ConfigError(f"synthetic: noise_std must be >= 0, got {self.noise_std}")
        if self.mixing not in ("linear", "nonlinear"):
            raise ConfigError(f"synthetic: mixing must be linear or nonlinear, got {self.mixing!r}")
        if self.mixing_weights is not None and self.mixing != "linear":
            raise ConfigError("synthetic: explicit mixing_weights require linear mixing")

    def to_dict(self) -> dict:
        d = {
            "n": self.n, "T": self.T, "latent_dim": self.latent_dim, "mixing": self.mixing,
            "noise_std": self.noise_std, "seed": self.seed,
        }
        if self.mixing_weights is not None:
            d["mixing_weights"] = self.mixing_weights
        if self.offsets is not None:
            d["offsets"] = self.offsets
        return d


def _latent_signals(spec: SyntheticSpec, rng: RngStream) -> np.ndarray:
    """Sinusoids with distinct incommensurate-ish periods and random phases."""
    base_periods = [24.0, 37.0, 59.0, 91.0, 133.0, 211.0, 307.0, 409.0]
    t = np.arange(spec.T)
    z = np.empty((spec.latent_dim, spec.T))
    for j in range(spec.latent_dim):
        period = base_periods[j % len(base_periods)] * (1.0 + 0.35 * (j // len(base_periods)))
        phase = rng.uniform(0.0, 2.0 * np.pi, ())
        z[j] = np.sin(2.0 * np.pi * t / period + phase)
    if spec.noise_std > 0:
        z += 0.25 * spec.noise_std * rng.normal(spec.latent_dim, spec.T)
    return z


def make_synthetic(spec: SyntheticSpec) -> Dataset:
    """Seeded panel of observed series driven by a low-dimensional latent.

    Linear mixing combines the latents through a random (or explicit)
    weight matrix plus per-series offsets. Nonlinear mixing combines the
    latents, their tanh images, and all pairwise products, which no
    rank-latent_dim linear factorization can reconstruct well.
    """
    rng = RngStream(spec.seed, 7001)
    z = _latent_signals(spec, rng)

    if spec.mixing == "linear":
        if spec.mixing_weights is not None:
            W = np.asarray(spec.mixing_weights, dtype=np.float64)
            if W.shape != (spec.n, spec.latent_dim):
                raise ConfigError(
                    f"synthetic: mixing_weights shape {W.shape} != ({spec.n}, {spec.latent_dim})"
                )
            offsets = np.zeros(spec.n)
        else:
            W = rng.uniform(-1.0, 1.0, (spec.n, spec.latent_dim))
            offsets = rng.uniform(2.0, 4.0, (spec.n,))
        y = W @ z + offsets[:, None]
    else:
        pairs = list(itertools.combinations(range(spec.latent_dim), 2))
        feats = np.concatenate(
            [z, np.tanh(1.5 * z)] + [(z[i] * z[j])[None, :] for i, j in pairs], axis=0
        )
        W = rng.uniform(-1.0, 1.0, (spec.n, feats.shape[0]))
        # keep per-series fluctuation comparable across feature counts
        W *= 1.2 / np.sqrt(feats.shape[0])
        offsets = rng.uniform(2.0, 4.0, (spec.n,))
        y = W @ feats + offsets[:, None]

    if spec.offsets is not None:
        off = np.asarray(spec.offsets, dtype=np.float64)
        if off.shape != (spec.n,):
            raise ConfigError(f"synthetic: offsets shape {off.shape} != ({spec.n},)")
        y = y - offsets[:, None] + off[:, None]
    if spec.noise_std > 0:
        y = y + spec.noise_std * rng.normal(spec.n, spec.T)
    names = [f"s{i:03d}" for i in range(spec.n)]
    return Dataset(values=y, names=names, frequency="synthetic")


def linear_reconstruction_error(values: np.ndarray, rank: int) -> float:
    """Relative Frobenius error of the best rank-`rank` approximation of
    the row-centered panel (truncated SVD)."""
    centered = values - values.mean(axis=1, keepdims=True)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    approx = (u[:, :rank] * s[:rank]) @ vt[:rank]
    denom = np.linalg.norm(centered)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(centered - approx) / denom)

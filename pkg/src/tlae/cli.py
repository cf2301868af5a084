"""Command line driver.

    tlae train|evaluate|forecast|sweep|plot|ablate --config <path>
         [--checkpoint <path>] [--out <dir>] [--seed <u64>]

Every subcommand reads one JSON run configuration. Outputs land in the
config's output_dir (overridable with --out) and are byte-reproducible
for a fixed config and seed, except for wall-time fields in the
training log. Exit codes: 0 success, 2 config, 3 data, 4 numeric,
5 output, 1 other.

Log verbosity is controlled with the TLAE_LOG environment variable
(quiet|info, default info).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import RunConfig, load_run_config
from .data import Dataset, Normalizer, load_csv, make_synthetic, normalize, save_csv
from .errors import ConfigError, DataError, OutputError, TlaeError
from .forecasting import ForecastEnsemble, RollingSpec, rolling_evaluate
from .metrics import MetricsReport, crps_pinball, crps_sum, mape, mse, quantile_loss, smape, wape
from .model import ModelConfig, checkpoint_hash, load_checkpoint, save_checkpoint
from .numeric import RngStream
from .svgplot import forecast_chart, line_chart
from .training import TrainConfig, fit


def _log(msg: str) -> None:
    if os.environ.get("TLAE_LOG", "info") != "quiet":
        print(msg, file=sys.stderr)


def _ensure_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {path}: {e}") from e
    return path


def _load_dataset(rc: RunConfig) -> Dataset:
    if rc.dataset.synthetic is not None:
        ds = make_synthetic(rc.dataset.synthetic)
    else:
        ds = load_csv(rc.dataset.csv_path, rc.dataset.timestamp_column)
    return ds.with_split(rc.eval.horizon, rc.eval.windows)


def _model_config(rc: RunConfig, n: int) -> ModelConfig:
    return ModelConfig(
        input_dim=n,
        encoder_dims=tuple(rc.model.encoder_dims),
        seq_len=rc.model.seq_len,
        lstm_layers=rc.model.lstm_layers,
        lstm_hidden=rc.model.lstm_hidden,
        mode=rc.model.mode,
        activation=rc.model.activation,
    )


def _train_config(rc: RunConfig) -> TrainConfig:
    t = rc.train
    return TrainConfig(
        batch_size=t.batch_size, stride=t.stride, epochs=t.epochs,
        learning_rate=t.learning_rate, weight=t.resolved_weight(rc.model.mode),
        p=t.p, q=t.q, seed=rc.seed, validation_steps=t.validation_steps,
        validation_horizon=t.validation_horizon, validation_samples=t.validation_samples,
        val_every=t.val_every, grad_clip=t.grad_clip,
    )


def _write_echo(rc: RunConfig, out: str) -> str:
    payload = {"config": rc.to_dict(), "config_hash": rc.content_hash()}
    path = os.path.join(out, "config_echo.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def cmd_train(rc: RunConfig) -> int:
    out = _ensure_dir(rc.output_dir)
    ds = _load_dataset(rc)
    ds, _ = normalize(ds, rc.dataset.normalization)
    config = _model_config(rc, ds.n)
    tc = _train_config(rc)
    _log(f"training on {ds.n} series x {ds.train_end} steps "
         f"({tc.epochs} epochs, mode={config.mode})")
    result = fit(ds.values[:, :ds.train_end], config, tc, checkpoint_dir=out)
    best = os.path.join(out, "checkpoint_best.tlae")
    final = os.path.join(out, "checkpoint_final.tlae")
    save_checkpoint(best, result.params)
    save_checkpoint(final, result.final_params)
    with open(os.path.join(out, "training_log.ndjson"), "w", encoding="utf-8") as f:
        for rec in result.log:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    _write_echo(rc, out)
    _log(f"checkpoints written to {out} (best epoch: {result.best_epoch}, "
         f"hash {checkpoint_hash(best)[:12]})")
    return 0


def _rolling_spec(rc: RunConfig) -> RollingSpec:
    return RollingSpec(
        horizon=rc.eval.horizon, windows=rc.eval.windows, context_len=rc.model.seq_len,
        samples=rc.eval.samples, quantile_levels=tuple(rc.eval.quantile_levels),
        trajectory_sampling=rc.eval.trajectory_sampling,
    )


def _run_rolling(rc: RunConfig, checkpoint: str | None):
    """Shared by evaluate/forecast: returns (ensemble, actuals, params, norm, ds)."""
    ckpt = checkpoint or os.path.join(rc.output_dir, "checkpoint_best.tlae")
    params = load_checkpoint(ckpt)
    ds = _load_dataset(rc)
    if params.config.input_dim != ds.n:
        raise ConfigError(
            f"checkpoint expects {params.config.input_dim} series, dataset has {ds.n}"
        )
    expected = _model_config(rc, ds.n)
    if params.config != expected:
        raise ConfigError(
            f"checkpoint model {params.config.to_dict()} does not match config "
            f"{expected.to_dict()}"
        )
    norm_ds, norm = normalize(ds, rc.dataset.normalization)
    ens, _ = rolling_evaluate(
        params.config, params, norm_ds.values, _rolling_spec(rc), RngStream(rc.seed, 50)
    )
    # metrics and outputs are always in original units
    ens = ForecastEnsemble(
        point=norm.invert(ens.point),
        samples=None if ens.samples is None else norm.invert_samples(ens.samples),
        quantiles={lv: norm.invert(q) for lv, q in ens.quantiles.items()},
    )
    actuals = ds.values[:, ds.train_end :].copy()
    return ens, actuals, params, ckpt, ds


def _compute_metrics(rc: RunConfig, ens: ForecastEnsemble, actuals: np.ndarray) -> MetricsReport:
    values: dict = {}
    for name in rc.eval.resolved_metrics(rc.model.mode):
        if name == "wape":
            values["wape"] = wape(ens.point, actuals)
        elif name == "mape":
            values["mape"] = mape(ens.point, actuals)
        elif name == "smape":
            values["smape"] = smape(ens.point, actuals)
        elif name == "mse":
            values["mse"] = mse(ens.point, actuals)
        elif name == "crps":
            values["crps"] = crps_pinball(ens.samples, actuals, rc.eval.crps_quantiles)
        elif name == "crps_sum":
            values["crps_sum"] = crps_sum(ens.samples, actuals, rc.eval.crps_quantiles)
        elif name == "quantile_loss":
            for lv in rc.eval.quantile_levels:
                values[f"quantile_loss[{lv:g}]"] = quantile_loss(ens.quantiles[lv], actuals, lv)
    return MetricsReport(
        values=values,
        metadata={
            "series": int(actuals.shape[0]),
            "horizon_steps": int(actuals.shape[1]),
            "samples": rc.eval.samples if rc.model.mode == "probabilistic" else 0,
            "crps_quantiles": rc.eval.crps_quantiles,
            "quantile_levels": list(rc.eval.quantile_levels),
            "seed": rc.seed,
            "config_hash": rc.content_hash(),
            "mode": rc.model.mode,
        },
    )


def cmd_evaluate(rc: RunConfig, checkpoint: str | None) -> int:
    out = _ensure_dir(rc.output_dir)
    rc.eval.resolved_metrics(rc.model.mode)  # fail fast on mode-gated metrics
    ens, actuals, _, ckpt, _ = _run_rolling(rc, checkpoint)
    report = _compute_metrics(rc, ens, actuals)
    report.metadata["checkpoint_hash"] = checkpoint_hash(ckpt)
    path = os.path.join(out, "metrics.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write(report.to_json())
    print(report.table())
    _log(f"metrics written to {path}")
    return 0


def cmd_forecast(rc: RunConfig, checkpoint: str | None) -> int:
    out = _ensure_dir(rc.output_dir)
    ens, actuals, params, ckpt, ds = _run_rolling(rc, checkpoint)
    header = ["step"]
    for name in ds.names:
        header.append(str(name))
        for lv in ens.quantiles:
            header.append(f"{name}@q{lv:g}")
    rows = []
    for t in range(ens.point.shape[1]):
        row = [str(t + 1)]
        for i in range(ds.n):
            row.append(repr(float(ens.point[i, t])))
            for lv in ens.quantiles:
                row.append(repr(float(ens.quantiles[lv][i, t])))
        rows.append(row)
    fpath = os.path.join(out, "forecast.csv")
    with open(fpath, "w", encoding="utf-8", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(row) + "\n")
    save_csv(
        Dataset(values=actuals, names=[str(v) for v in ds.names]),
        os.path.join(out, "actuals.csv"),
    )
    manifest = {
        "horizon": rc.eval.horizon,
        "windows": rc.eval.windows,
        "samples": rc.eval.samples,
        "quantile_levels": sorted(float(v) for v in ens.quantiles),
        "seed": rc.seed,
        "checkpoint_hash": checkpoint_hash(ckpt),
        "config_hash": rc.content_hash(),
        "series": [str(v) for v in ds.names],
    }
    with open(os.path.join(out, "forecast_manifest.json"), "w", encoding="utf-8") as f:
        f.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    _log(f"forecasts written to {fpath}")
    return 0


def cmd_plot(rc: RunConfig) -> int:
    out = rc.output_dir
    fpath = os.path.join(out, "forecast.csv")
    apath = os.path.join(out, "actuals.csv")
    for p in (fpath, apath):
        if not os.path.exists(p):
            raise DataError(f"plot: missing {p}; run the forecast subcommand first")
    actual_ds = load_csv(apath)
    with open(fpath, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split(",")
        body = [line.rstrip("\n").split(",") for line in f if line.strip()]
    cols = {name: [float(r[i]) for r in body] for i, name in enumerate(header)}
    if len(body) != actual_ds.T:
        raise DataError(
            f"plot: forecast has {len(body)} steps but actuals {actual_ds.T}"
        )
    levels = sorted(
        {float(name.split("@q")[1]) for name in header if "@q" in name}
    )
    lo_hi = (levels[0], levels[-1]) if len(levels) >= 2 else None
    plot_dir = _ensure_dir(os.path.join(out, "plots"))
    count = min(rc.eval.plot_series, actual_ds.n) or actual_ds.n
    written = []
    for i in range(count):
        name = str(actual_ds.names[i])
        lower = upper = None
        if lo_hi is not None:
            lower = cols[f"{name}@q{lo_hi[0]:g}"]
            upper = cols[f"{name}@q{lo_hi[1]:g}"]
        svg = forecast_chart(
            name, actual_ds.values[i].tolist(), cols[name], lower, upper
        )
        path = os.path.join(plot_dir, f"series_{name}.svg")
        with open(path, "w", encoding="utf-8") as f:
            f.write(svg)
        written.append(path)
    _log(f"{len(written)} plot(s) written to {plot_dir}")
    return 0


_SWEEP_AXES = ("batch-size", "lambda", "latent-dim")


def _apply_axis(rc_dict: dict, axis: str, value: float) -> dict:
    d = json.loads(json.dumps(rc_dict))  # deep copy
    if axis == "batch-size":
        d["train"]["batch_size"] = int(value)
    elif axis == "lambda":
        d["train"]["lambda"] = float(value)
    elif axis == "latent-dim":
        dims = list(d["model"]["encoder_dims"])
        dims[-1] = int(value)
        d["model"]["encoder_dims"] = dims
    return d


def cmd_sweep(rc: RunConfig, axis: str, values: list) -> int:
    if axis not in _SWEEP_AXES:
        raise ConfigError(f"sweep: axis must be one of {_SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep: at least one value required")
    out = _ensure_dir(rc.output_dir)
    base = rc.to_dict()
    runs = []
    for i, value in enumerate(values):
        tag = f"{axis}={value:g}"
        sub = os.path.join(out, "sweep", tag.replace("/", "_"))
        d = _apply_axis(base, axis, value)
        d["output_dir"] = sub
        d["seed"] = rc.seed + i
        entry: dict = {"axis": axis, "value": value, "output_dir": sub, "seed": d["seed"]}
        try:
            sub_rc = RunConfig.parse(d)
            cmd_train(sub_rc)
            cmd_evaluate(sub_rc, None)
            with open(os.path.join(sub, "metrics.json"), "r", encoding="utf-8") as f:
                entry["metrics"] = MetricsReport.from_json(f.read()).values
            entry["status"] = "ok"
        except TlaeError as e:
            entry["status"] = "failed"
            entry["error"] = str(e)
            _log(f"sweep run {tag} failed: {e}")
        runs.append(entry)
    report = {"axis": axis, "values": list(values), "runs": runs}
    with open(os.path.join(out, "sweep_report.json"), "w", encoding="utf-8") as f:
        f.write(json.dumps(report, sort_keys=True, indent=2) + "\n")

    ok = [r for r in runs if r["status"] == "ok"]
    if ok:
        metric_names = [m for m in ("wape", "mape", "smape") if m in ok[0]["metrics"]]
        colors = {"wape": "#1f3fbf", "mape": "#d95f02", "smape": "#2ca02c"}
        curves = [
            (m, [r["value"] for r in ok], [r["metrics"][m] for r in ok], colors[m])
            for m in metric_names
        ]
        svg = line_chart(curves, title=f"sweep over {axis}", x_label=axis, y_label="metric")
        with open(os.path.join(out, "sweep_chart.svg"), "w", encoding="utf-8") as f:
            f.write(svg)
    width = max((len(f"{r['value']:g}") for r in runs), default=5)
    print(f"{axis:>{max(width, 10)}}  status  metrics")
    for r in runs:
        shown = ""
        if r["status"] == "ok":
            shown = "  ".join(f"{k}={v:.4f}" for k, v in sorted(r["metrics"].items()))
        print(f"{r['value']:>{max(width, 10)}g}  {r['status']:6}  {shown}")
    return 0


def cmd_ablate(rc: RunConfig) -> int:
    out = _ensure_dir(rc.output_dir)
    base = rc.to_dict()
    rows = {}
    for label, activation in (("nonlinear", "relu"), ("linear", "linear")):
        d = json.loads(json.dumps(base))
        d["model"]["activation"] = activation
        d["output_dir"] = os.path.join(out, "ablation", label)
        sub_rc = RunConfig.parse(d)
        cmd_train(sub_rc)
        cmd_evaluate(sub_rc, None)
        with open(os.path.join(d["output_dir"], "metrics.json"), "r", encoding="utf-8") as f:
            rows[label] = MetricsReport.from_json(f.read()).values
    report = {"seed": rc.seed, "epochs": rc.train.epochs, "rows": rows}
    with open(os.path.join(out, "ablation_report.json"), "w", encoding="utf-8") as f:
        f.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    names = [m for m in ("wape", "mape", "smape") if m in rows["nonlinear"]]
    print("encoder    " + "  ".join(f"{m:>8}" for m in names))
    for label in ("linear", "nonlinear"):
        print(f"{label:10} " + "  ".join(f"{rows[label][m]:8.4f}" for m in names))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tlae", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "evaluate", "forecast", "sweep", "plot", "ablate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--checkpoint", default=None, help="parameter checkpoint to load")
        p.add_argument("--out", default=None, help="override the config's output_dir")
        p.add_argument("--seed", type=int, default=None, help="override the config's seed")
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=_SWEEP_AXES)
            p.add_argument("--values", required=True,
                           help="comma-separated values for the swept axis")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = load_run_config(args.config)
        if args.out is not None:
            rc.output_dir = args.out
        if args.seed is not None:
            rc.seed = args.seed
        if args.command == "train":
            return cmd_train(rc)
        if args.command == "evaluate":
            return cmd_evaluate(rc, args.checkpoint)
        if args.command == "forecast":
            return cmd_forecast(rc, args.checkpoint)
        if args.command == "plot":
            return cmd_plot(rc)
        if args.command == "sweep":
            values = [float(v) for v in args.values.split(",") if v.strip()]
            return cmd_sweep(rc, args.axis, values)
        if args.command == "ablate":
            return cmd_ablate(rc)
        raise ConfigError(f"unknown command {args.command!r}")
    except TlaeError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())

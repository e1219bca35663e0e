"""``cablecal`` command line: the calibration workflow end to end.

Subcommands mirror the pipeline stages -- ``generate`` a coverage
trajectory, ``record`` a simulated session into a bag, ``process`` bags
into train/test datasets, ``train`` a calibration model, ``evaluate`` its
accuracy (optionally hour-by-hour), ``bench`` its servo-budget latency,
``sweep`` directions, and ``pipeline`` to run the whole chain. Every
command writes a run manifest next to its artifacts.

Exit codes: 0 success, 2 configuration/usage error, 3 stage failure.
"""

from __future__ import annotations

import functools
import shutil
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import click

from . import data as data_mod
from . import trajectory as traj_mod
from .config import Config, ConfigError, load_config
from .evaluate import (bench_latency, decay_curve, direction_sweep,
                       evaluate_model, write_json, write_rows_csv)
from .manifest import RunManifest
from .models import (deserialize, fit_linear, fit_mlp, fit_offset, fit_poly2,
                     serialize)
from .trajectory import DIRECTIONS

EXIT_CONFIG = 2
EXIT_STAGE = 3


class StageError(RuntimeError):
    def __init__(self, stage: str):
        super().__init__(stage)
        self.stage = stage


@dataclass
class CliState:
    config: Config
    config_path: str
    seed: int
    out_dir: Path
    repeats: int


def _cleanup(paths) -> None:
    for p in paths:
        p = Path(p)
        if p.is_dir():
            shutil.rmtree(p, ignore_errors=True)
        elif p.exists():
            p.unlink()


def _stage(manifest: RunManifest, name: str, outputs, fn, sim_s=None):
    """Run one stage; on failure remove its partial outputs and re-raise."""
    t0 = time.perf_counter()
    try:
        result = fn()
    except Exception as exc:
        _cleanup(outputs)
        click.echo(f"stage '{name}' failed: {exc}", err=True)
        raise StageError(name) from exc
    wall = time.perf_counter() - t0
    sim = sim_s(result) if callable(sim_s) else sim_s
    manifest.add_stage(name, wall, sim)
    note = f" (simulated {sim:.0f} s)" if sim else ""
    click.echo(f"[{name}] done in {wall:.2f} s{note}")
    return result


def _sparsity_tag(s: float) -> str:
    return f"{s:g}"


def _finish(state: CliState, manifest: RunManifest) -> None:
    path = manifest.write(state.out_dir)
    click.echo(f"manifest: {path}")


def _manifest(state: CliState, command: str) -> RunManifest:
    return RunManifest(command=command, seed=state.seed,
                       config=state.config.to_dict())


def _guard(fn):
    """Map domain errors to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except StageError:
            sys.exit(EXIT_STAGE)

    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="TOML (or JSON) config file; defaults used when omitted.")
@click.option("--seed", type=int, default=None,
              help="Global RNG seed (default: training.seed from config).")
@click.option("--out-dir", type=click.Path(), default="cablecal-out",
              show_default=True, help="Directory for artifacts + manifest.")
@click.option("--repeats", type=int, default=None,
              help="Benchmark repeat count (default: eval.repeats).")
@click.pass_context
def main(ctx, config_path, seed, out_dir, repeats):
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx.obj = CliState(
        config=cfg,
        config_path=config_path or "<defaults>",
        seed=cfg.training.seed if seed is None else seed,
        out_dir=out,
        repeats=cfg.eval.repeats if repeats is None else repeats,
    )


# ---------------------------------------------------------------------------
# generate


@main.command("generate")
@click.option("--direction", type=click.Choice(DIRECTIONS + ("all",)),
              default=None, help="Sweep direction (default from config).")
@click.option("--sparsity", type=float, default=None,
              help="Raster spacing fraction in (0, 1/2].")
@click.pass_obj
@_guard
def generate_command(state, direction, sparsity):
    """Generate a zig-zag coverage trajectory (CSV + sidecar)."""
    cfg = state.config
    direction = direction or cfg.trajectory.direction
    sparsity = cfg.trajectory.sparsity if sparsity is None else sparsity
    manifest = _manifest(state, "generate")
    for d in (DIRECTIONS if direction == "all" else (direction,)):
        path = state.out_dir / f"traj_{d}_{_sparsity_tag(sparsity)}.csv"
        sidecar = path.with_suffix(".json")

        def run(d=d, path=path):
            traj = traj_mod.generate(d, sparsity, cfg.limits,
                                     cfg.trajectory.step)
            traj_mod.save(traj, path)
            dur = traj_mod.trajectory_duration(traj, cfg.trajectory.speeds)
            click.echo(f"  {d} sparsity {sparsity:g}: "
                       f"{len(traj.waypoints)} waypoints, "
                       f"{dur:.0f} s to follow")
            return traj

        _stage(manifest, f"generate[{d},{sparsity:g}]", [path, sidecar], run)
        manifest.add_output(path)
        manifest.add_output(sidecar)
    _finish(state, manifest)


# ---------------------------------------------------------------------------
# record


@main.command("record")
@click.option("--trajectory", "traj_path", type=click.Path(exists=True),
              default=None, help="Trajectory CSV to follow (else generated).")
@click.option("--direction", type=click.Choice(DIRECTIONS), default=None)
@click.option("--sparsity", type=float, default=None)
@click.option("--load", default="unloaded", show_default=True,
              help="'unloaded', 'loaded', 'idle' or grams.")
@click.option("--time-scale", type=float, default=None,
              help="Emit 1/k of the samples while keeping simulated time.")
@click.option("--name", default=None, help="Bag directory name.")
@click.pass_obj
@_guard
def record_command(state, traj_path, direction, sparsity, load, time_scale,
                   name):
    """Record one simulated session into a bag directory."""
    cfg = state.config
    direction = direction or cfg.trajectory.direction
    sparsity = cfg.trajectory.sparsity if sparsity is None else sparsity
    time_scale = cfg.eval.time_scale if time_scale is None else time_scale
    try:
        load_arg = float(load)
    except ValueError:
        load_arg = load
    manifest = _manifest(state, "record")
    bag_dir = state.out_dir / (
        name or f"bag_{direction}_{_sparsity_tag(sparsity)}")

    def run():
        if traj_path is not None:
            traj = traj_mod.load(traj_path)
            manifest.add_input(traj_path)
        else:
            traj = traj_mod.generate(direction, sparsity, cfg.limits,
                                     cfg.trajectory.step)
        bag = data_mod.record(
            traj, cfg.error_model, load=load_arg, rates=cfg.eval.rates,
            seed=state.seed, time_scale=time_scale, limits=cfg.limits,
            speeds=cfg.trajectory.speeds)
        data_mod.save_bag(bag, bag_dir)
        click.echo(f"  {len(bag.state.t)} state / {len(bag.truth.t)} truth "
                   f"samples -> {bag_dir}")
        return bag

    _stage(manifest, "record", [bag_dir], run,
           sim_s=lambda b: b.metadata.get("duration_s"))
    manifest.add_output(bag_dir)
    _finish(state, manifest)


# ---------------------------------------------------------------------------
# process


@main.command("process")
@click.option("--bag", "bags", type=click.Path(exists=True), multiple=True,
              required=True, help="Bag directory (repeatable).")
@click.option("--full-features", is_flag=True,
              help="Keep every logged column instead of the selected 16.")
@click.option("--train-frac", type=float, default=None)
@click.option("--tolerance", type=float, default=None,
              help="Stream pairing tolerance in seconds.")
@click.pass_obj
@_guard
def process_command(state, bags, full_features, train_frac, tolerance):
    """Synchronize bag streams and split into train/test datasets."""
    cfg = state.config
    train_frac = cfg.training.train_frac if train_frac is None else train_frac
    tolerance = cfg.eval.sync_tolerance_s if tolerance is None else tolerance
    manifest = _manifest(state, "process")
    train_path = state.out_dir / "train.csv"
    test_path = state.out_dir / "test.csv"
    outputs = [train_path, train_path.with_suffix(".json"),
               test_path, test_path.with_suffix(".json")]

    def run():
        parts = []
        for b in bags:
            manifest.add_input(b)
            parts.append(data_mod.synchronize(data_mod.load_bag(b),
                                              tolerance, full_features))
        ds = data_mod.concat(parts) if len(parts) > 1 else parts[0]
        train_ds, test_ds = data_mod.split_and_normalize(ds, train_frac)
        data_mod.save_dataset(train_ds, train_path)
        data_mod.save_dataset(test_ds, test_path)
        click.echo(f"  {len(train_ds)} train / {len(test_ds)} test rows "
                   f"({ds.inputs.shape[1]} input columns)")
        return train_ds, test_ds

    _stage(manifest, "process", outputs, run)
    for p in outputs:
        manifest.add_output(p)
    _finish(state, manifest)


# ---------------------------------------------------------------------------
# train


def _fit_from_config(cfg: Config, ds, kind, mode, seed, epochs=None,
                     ridge=None):
    ridge = cfg.training.ridge if ridge is None else ridge
    if kind == "offset":
        return fit_offset(ds, mode)
    if kind == "linear":
        return fit_linear(ds, mode, ridge)
    if kind == "poly2":
        return fit_poly2(ds, mode, ridge)
    mlp_cfg = cfg.training.mlp_config()
    if epochs is not None:
        mlp_cfg = replace(mlp_cfg, epochs=epochs)
    return fit_mlp(ds, mode, mlp_cfg, seed)


@main.command("train")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True),
              required=True, help="Training dataset CSV.")
@click.option("--model", "kind",
              type=click.Choice(("offset", "linear", "poly2", "mlp")),
              default=None, help="Model family (default from config).")
@click.option("--mode", type=click.Choice(("on-error", "end-to-end")),
              default=None)
@click.option("--epochs", type=int, default=None, help="MLP epoch override.")
@click.option("--ridge", type=float, default=None)
@click.option("--name", default="model.ccm", show_default=True)
@click.pass_obj
@_guard
def train_command(state, dataset_path, kind, mode, epochs, ridge, name):
    """Fit a calibration model and write a .ccm model file."""
    cfg = state.config
    kind = kind or cfg.training.model
    mode = mode or cfg.training.mode
    manifest = _manifest(state, "train")
    manifest.add_input(dataset_path)
    model_path = state.out_dir / name

    def run():
        ds = data_mod.load_dataset(dataset_path)
        model = _fit_from_config(cfg, ds, kind, mode, state.seed, epochs,
                                 ridge)
        serialize(model, model_path)
        click.echo(f"  {kind} [{mode}] on {len(ds)} rows -> {model_path}")
        return model

    _stage(manifest, f"train[{kind}]", [model_path], run)
    manifest.add_output(model_path)
    _finish(state, manifest)


# ---------------------------------------------------------------------------
# evaluate


@main.command("evaluate")
@click.option("--model-file", type=click.Path(exists=True), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(exists=True),
              required=True, help="Evaluation dataset CSV.")
@click.option("--train-dataset", type=click.Path(exists=True), default=None,
              help="Dataset for the fixed-offset baseline (default: eval set).")
@click.option("--decay", is_flag=True, help="Also emit hour-bucket decay rows.")
@click.option("--bucket-s", type=float, default=3600.0, show_default=True)
@click.option("--emit-plot-data", is_flag=True,
              help="Write plot-ready long-format CSV alongside the report.")
@click.pass_obj
@_guard
def evaluate_command(state, model_file, dataset_path, train_dataset, decay,
                     bucket_s, emit_plot_data):
    """Score a model file: per-joint RMSE vs raw and fixed-offset baselines."""
    manifest = _manifest(state, "evaluate")
    manifest.add_input(model_file)
    manifest.add_input(dataset_path)
    csv_path = state.out_dir / "rmse_report.csv"
    json_path = state.out_dir / "rmse_report.json"
    outputs = [csv_path, json_path]

    def run():
        model = deserialize(model_file)
        ds = data_mod.load_dataset(dataset_path)
        model.check_compatible(ds.schema)
        if train_dataset is not None:
            manifest.add_input(train_dataset)
            base_ds = data_mod.load_dataset(train_dataset)
        else:
            base_ds = ds
        offset = fit_offset(base_ds, model.mode)
        report = evaluate_model(model, ds, offset)
        rows = report.to_rows()
        if decay:
            for rep in decay_curve(model, ds, offset, bucket_s):
                rows.extend(rep.to_rows())
        for row in rows:
            row["model"] = model.kind
            row["mode"] = model.mode
        write_rows_csv(rows, csv_path)
        write_json(rows, json_path)
        for row in report.to_rows():
            click.echo(f"  {row['joint']}: raw {row['raw_rmse']:.3f}  "
                       f"offset {row['fixed_offset_rmse']:.3f}  "
                       f"{model.kind} {row['model_rmse']:.3f} "
                       f"({100 * row['percentage']:.1f}% of offset)")
        return rows

    rows = _stage(manifest, "evaluate", outputs, run)
    if emit_plot_data:
        plot_path = state.out_dir / "plot_data.csv"
        write_rows_csv(rows, plot_path)
        manifest.add_output(plot_path)
    for p in outputs:
        manifest.add_output(p)
    _finish(state, manifest)


# ---------------------------------------------------------------------------
# bench


@main.command("bench")
@click.option("--model-file", "model_files", type=click.Path(exists=True),
              multiple=True, required=True, help="Model .ccm (repeatable).")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True),
              required=True, help="Dataset supplying realistic feature rows.")
@click.option("--samples", type=int, default=None,
              help="Timed predictions per run (default eval.latency_samples).")
@click.option("--budget-hz", type=float, default=None)
@click.pass_obj
@_guard
def bench_command(state, model_files, dataset_path, samples, budget_hz):
    """Measure batch-1 predict latency against the servo budget."""
    cfg = state.config
    samples = cfg.eval.latency_samples if samples is None else samples
    budget_hz = cfg.eval.budget_hz if budget_hz is None else budget_hz
    manifest = _manifest(state, "bench")
    manifest.add_input(dataset_path)
    csv_path = state.out_dir / "latency.csv"
    json_path = state.out_dir / "latency.json"

    def run():
        ds = data_mod.load_dataset(dataset_path)
        rows, dicts = [], []
        for mf in model_files:
            manifest.add_input(mf)
            model = deserialize(mf)
            model.check_compatible(ds.schema)
            rep = bench_latency(model, ds.inputs, samples, budget_hz,
                                state.repeats)
            rows.extend(rep.to_rows())
            dicts.append(rep.to_dict())
            verdict = "PASS" if rep.passed else "FAIL"
            click.echo(f"  {model.kind}: p50 {rep.p50_s * 1e3:.4f} ms  "
                       f"p99 {rep.p99_s * 1e3:.4f} ms  "
                       f"[{verdict} vs {budget_hz:.0f} Hz]")
        write_rows_csv(rows, csv_path)
        write_json(dicts, json_path)
        return rows

    _stage(manifest, "bench", [csv_path, json_path], run)
    manifest.add_output(csv_path)
    manifest.add_output(json_path)
    _finish(state, manifest)


# ---------------------------------------------------------------------------
# sweep


@main.command("sweep")
@click.option("--directions", default=",".join(DIRECTIONS), show_default=True,
              help="Comma-separated direction list.")
@click.option("--sparsities", default=None,
              help="Comma-separated sparsity list (default from config).")
@click.option("--time-scale", type=float, default=None)
@click.option("--with-mlp", is_flag=True,
              help="Also fit the MLP per direction.")
@click.option("--load", default="unloaded", show_default=True)
@click.option("--emit-plot-data", is_flag=True)
@click.pass_obj
@_guard
def sweep_command(state, directions, sparsities, time_scale, with_mlp, load,
                  emit_plot_data):
    """Fit models per trajectory direction and tabulate test RMSE."""
    cfg = state.config
    time_scale = cfg.eval.time_scale if time_scale is None else time_scale
    dir_list = tuple(d.strip() for d in directions.split(",") if d.strip())
    bad = [d for d in dir_list if d not in DIRECTIONS]
    if bad:
        raise ConfigError(f"unknown direction(s): {', '.join(bad)}")
    if sparsities is None:
        sp_list = cfg.trajectory.sparsities
    else:
        sp_list = tuple(float(s) for s in sparsities.split(",") if s.strip())
    manifest = _manifest(state, "sweep")
    csv_path = state.out_dir / "sweep.csv"
    json_path = state.out_dir / "sweep.json"

    def run():
        fits = {"linear": lambda ds: fit_linear(ds, cfg.training.mode,
                                                cfg.training.ridge)}
        if with_mlp:
            fits["mlp"] = lambda ds: fit_mlp(ds, cfg.training.mode,
                                             cfg.training.mlp_config(),
                                             state.seed)
        table = direction_sweep(
            cfg.error_model, fits, directions=dir_list, sparsities=sp_list,
            limits=cfg.limits, rates=cfg.eval.rates, seed=state.seed,
            time_scale=time_scale, train_frac=cfg.training.train_frac,
            load=load)
        rows = table.to_rows()
        write_rows_csv(rows, csv_path)
        write_json(rows, json_path)
        for model in table.model_names():
            best = [table.best_direction(model, j) for j in range(3)]
            click.echo(f"  best direction per joint [{model}]: "
                       f"j1={best[0]} j2={best[1]} j3={best[2]}")
        return rows

    rows = _stage(manifest, "sweep", [csv_path, json_path], run)
    if emit_plot_data:
        plot_path = state.out_dir / "plot_data.csv"
        write_rows_csv(rows, plot_path)
        manifest.add_output(plot_path)
    manifest.add_output(csv_path)
    manifest.add_output(json_path)
    _finish(state, manifest)


# ---------------------------------------------------------------------------
# pipeline


@main.command("pipeline")
@click.option("--time-scale", type=float, default=None)
@click.option("--epochs", type=int, default=None, help="MLP epoch override.")
@click.pass_obj
@_guard
def pipeline_command(state, time_scale, epochs):
    """Run generate -> record -> process -> train -> evaluate -> bench."""
    cfg = state.config
    time_scale = cfg.eval.time_scale if time_scale is None else time_scale
    direction = cfg.trajectory.direction
    sparsity = cfg.trajectory.sparsity
    manifest = _manifest(state, "pipeline")
    out = state.out_dir

    traj_path = out / f"traj_{direction}_{_sparsity_tag(sparsity)}.csv"
    bag_dir = out / f"bag_{direction}_{_sparsity_tag(sparsity)}"
    train_path, test_path = out / "train.csv", out / "test.csv"
    model_path = out / "model.ccm"

    def gen():
        traj = traj_mod.generate(direction, sparsity, cfg.limits,
                                 cfg.trajectory.step)
        traj_mod.save(traj, traj_path)
        return traj

    traj = _stage(manifest, "generate",
                  [traj_path, traj_path.with_suffix(".json")], gen)
    manifest.add_output(traj_path)

    def rec():
        bag = data_mod.record(
            traj, cfg.error_model, load=cfg.eval.load, rates=cfg.eval.rates,
            seed=state.seed, time_scale=time_scale, limits=cfg.limits,
            speeds=cfg.trajectory.speeds)
        data_mod.save_bag(bag, bag_dir)
        return bag

    bag = _stage(manifest, "record", [bag_dir], rec,
                 sim_s=lambda b: b.metadata.get("duration_s"))
    manifest.add_output(bag_dir)

    def proc():
        ds = data_mod.synchronize(bag, cfg.eval.sync_tolerance_s)
        train_ds, test_ds = data_mod.split_and_normalize(
            ds, cfg.training.train_frac)
        data_mod.save_dataset(train_ds, train_path)
        data_mod.save_dataset(test_ds, test_path)
        click.echo(f"  {len(train_ds)} train / {len(test_ds)} test rows")
        return train_ds, test_ds

    train_ds, test_ds = _stage(
        manifest, "process",
        [train_path, train_path.with_suffix(".json"),
         test_path, test_path.with_suffix(".json")], proc)
    manifest.add_output(train_path)
    manifest.add_output(test_path)

    def fit():
        model = _fit_from_config(cfg, train_ds, cfg.training.model,
                                 cfg.training.mode, state.seed, epochs)
        serialize(model, model_path)
        return model

    model = _stage(manifest, f"train[{cfg.training.model}]", [model_path],
                   fit)
    manifest.add_output(model_path)

    def ev():
        offset = fit_offset(train_ds, model.mode)
        report = evaluate_model(model, test_ds, offset)
        rows = report.to_rows()
        for row in rows:
            row["model"] = model.kind
            row["mode"] = model.mode
        write_rows_csv(rows, out / "rmse_report.csv")
        write_json(rows, out / "rmse_report.json")
        for row in rows:
            click.echo(f"  {row['joint']}: raw {row['raw_rmse']:.3f}  "
                       f"offset {row['fixed_offset_rmse']:.3f}  "
                       f"{model.kind} {row['model_rmse']:.3f}")
        return rows

    _stage(manifest, "evaluate",
           [out / "rmse_report.csv", out / "rmse_report.json"], ev)
    manifest.add_output(out / "rmse_report.csv")
    manifest.add_output(out / "rmse_report.json")

    def bn():
        rep = bench_latency(model, test_ds.inputs,
                            min(cfg.eval.latency_samples, 5000),
                            cfg.eval.budget_hz, state.repeats)
        write_rows_csv(rep.to_rows(), out / "latency.csv")
        write_json([rep.to_dict()], out / "latency.json")
        verdict = "PASS" if rep.passed else "FAIL"
        click.echo(f"  {model.kind}: p99 {rep.p99_s * 1e3:.4f} ms "
                   f"[{verdict} vs {cfg.eval.budget_hz:.0f} Hz]")
        return rep

    _stage(manifest, "bench", [out / "latency.csv", out / "latency.json"], bn)
    manifest.add_output(out / "latency.csv")
    manifest.add_output(out / "latency.json")
    _finish(state, manifest)


if __name__ == "__main__":
    main()

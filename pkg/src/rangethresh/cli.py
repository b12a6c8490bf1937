"""Command-line pipelines: synth -> fit -> train -> apply -> eval / bench.

Every stage reads and writes plain text files, so each intermediate is
inspectable and a whole pipeline is reproducible byte-for-byte from the
config file and seed.  Exit codes: 0 success, 1 I/O or parse error,
2 precondition or calibration error, 3 internal failure.
"""

from __future__ import annotations

import dataclasses
import functools
import sys
from pathlib import Path

import click

from . import __version__
from .baselines import apply_static_dual, fit_binned_threshold
from .binning import assign_bin, bin_statistics, bin_stats_csv
from .config import ConfigError, RunConfig, load_run_config, run_config_json
from .curve import (CalibrationError, DegenerateFitError, apply_curve,
                    calibrate, load_curve, prefilter_static_dual,
                    serialize_curve)
from .detections import (DetectionSet, ParseError, load_detections,
                         load_ground_truth, range_of, serialize_detections,
                         serialize_ground_truth)
from .evaluate import (evaluate, pr_curve_csv, pr_curve_points,
                       report_csv, report_text)
from .mlp import (FeatureMap, TrainConfig, TrainingError, as_filter,
                  distill_samples, f1_target_samples, init_model, load_model,
                  loss_trace_csv, serialize_model, train)
from .synth import SceneConfig, config_echo_json, generate_scene, weather_preset


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ParseError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except (CalibrationError, DegenerateFitError, ConfigError,
                TrainingError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except Exception as exc:  # invariant breakage is a bug, not bad input
            click.echo(f"internal error: {exc!r}", err=True)
            sys.exit(3)
    return wrapper


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


config_option = click.option(
    "--config", "config_path", type=click.Path(), default=None,
    help="JSON run configuration; flags override file values of the same name.")


@click.group()
@click.version_option(version=__version__, prog_name="rangethresh")
def main():
    """Distance-adaptive confidence thresholding toolkit."""


@main.command("synth")
@config_option
@click.option("--seed", type=int, default=None, help="Generator seed [config key: scene.seed].")
@click.option("--preset", default="clear", show_default=True,
              help="Weather preset: clear, fog, or rain (sets scene.clutter_rate and scene.score_noise_std).")
@click.option("--frames", type=int, default=None, help="Frame count [config key: scene.n_frames].")
@click.option("--out-dir", type=click.Path(), default=None,
              help="Output directory [config key: output_dir].")
@_guard
def cmd_synth(config_path, seed, preset, frames, out_dir):
    """Generate a synthetic scene: detections, ground truth, config echo."""
    cfg = load_run_config(config_path)
    base = dataclasses.asdict(cfg.scene)
    base["labels"] = tuple(base["labels"])
    base["label_weights"] = tuple(base["label_weights"])
    base.update(weather_preset(preset))
    if seed is not None:
        base["seed"] = seed
    if frames is not None:
        base["n_frames"] = frames
    scene = SceneConfig(**base)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    gts, dets = generate_scene(scene)
    _write(out / "ground_truth.csv", serialize_ground_truth(gts))
    _write(out / "detections.csv", serialize_detections(dets))
    _write(out / "scene_config.json", config_echo_json(scene))
    click.echo(f"wrote {len(gts)} ground-truth objects, {len(dets)} detections to {out}")


def _calibrate_pipeline(dets, cfg: RunConfig):
    """Shared fit path: optional static-dual prefilter, bin stats, curve."""
    cal_set = dets
    if cfg.prefilter.enabled:
        cal_set = prefilter_static_dual(dets, cfg.prefilter.near,
                                        cfg.prefilter.far, cfg.prefilter.split,
                                        cfg.range_mode)
    stats = bin_statistics(cal_set, cfg.bins, cfg.range_mode)
    curve = calibrate(stats, cfg.rule, cfg.floor_k, cfg.bins)
    return curve, stats


@main.command("fit")
@click.argument("detections_file", type=click.Path(exists=True))
@config_option
@click.option("--gt", "gt_file", type=click.Path(exists=True), default=None,
              help="Optional ground truth; when given, the fitted curve's overall precision/recall is printed.")
@click.option("--no-prefilter", is_flag=True, default=False,
              help="Calibrate on raw detections [config key: prefilter.enabled].")
@click.option("--alpha", type=float, default=None, help="Deviation multiplier [config key: rule.alpha].")
@click.option("--beta", type=float, default=None, help="Mean multiplier [config key: rule.beta].")
@click.option("--floor", "floor_k", type=float, default=None,
              help="Threshold floor clamp [config key: floor_k].")
@click.option("--out-dir", type=click.Path(), default=None,
              help="Output directory [config key: output_dir].")
@_guard
def cmd_fit(detections_file, config_path, gt_file, no_prefilter, alpha, beta,
            floor_k, out_dir):
    """Fit the distance-adaptive threshold curve from binned statistics."""
    cfg = load_run_config(config_path)
    if no_prefilter:
        cfg = dataclasses.replace(cfg, prefilter=dataclasses.replace(cfg.prefilter, enabled=False))
    if alpha is not None or beta is not None:
        rule = dataclasses.replace(cfg.rule,
                                   **({"alpha": alpha} if alpha is not None else {}),
                                   **({"beta": beta} if beta is not None else {}))
        cfg = dataclasses.replace(cfg, rule=rule)
    if floor_k is not None:
        cfg = dataclasses.replace(cfg, floor_k=floor_k)
    dets = load_detections(detections_file)
    curve, stats = _calibrate_pipeline(dets, cfg)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    _write(out / "curve.txt", serialize_curve(curve))
    _write(out / "bin_stats.csv", bin_stats_csv(stats))
    click.echo(f"curve: a={curve.a:.6g} b={curve.b:.6g} c={curve.c:.6g} "
               f"floor={curve.floor_k:g} d_max={curve.d_max:g}")
    for b in stats.bins:
        if b.n == 0:
            click.echo(f"  bin {b.bin_index} [{b.lower:g},{b.upper:g}): empty")
            continue
        target = min(max(cfg.rule.beta * b.mean_score - cfg.rule.alpha * b.std_score, 0.0), 1.0)
        click.echo(f"  bin {b.bin_index} [{b.lower:g},{b.upper:g}): n={b.n} "
                   f"mean={b.mean_score:.4f} std={b.std_score:.4f} target={target:.4f}")
    if gt_file is not None:
        gts = load_ground_truth(gt_file)
        rep = evaluate(apply_curve(dets, curve, cfg.range_mode), gts,
                       cfg.match, cfg.bins, cfg.range_mode, with_ap=False)
        click.echo(f"curve filter vs ground truth: precision="
                   f"{_num(rep.precision)} recall={_num(rep.recall)} f1={_num(rep.f1)}")


def _num(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


@main.command("apply")
@click.argument("detections_file", type=click.Path(exists=True))
@config_option
@click.option("--curve", "curve_file", type=click.Path(exists=True), default=None,
              help="Threshold curve file produced by fit.")
@click.option("--model", "model_file", type=click.Path(exists=True), default=None,
              help="Neural threshold model file produced by train.")
@click.option("--out", "out_file", type=click.Path(), default=None,
              help="Filtered detections path (default: <output_dir>/filtered.csv).")
@_guard
def cmd_apply(detections_file, config_path, curve_file, model_file, out_file):
    """Filter detections with a fitted curve or a trained model."""
    if (curve_file is None) == (model_file is None):
        raise ValueError("pass exactly one of --curve or --model")
    cfg = load_run_config(config_path)
    dets = load_detections(detections_file)
    if curve_file is not None:
        curve = load_curve(curve_file)
        threshold_at = curve.evaluate
    else:
        model, featmap = load_model(model_file)
        if featmap is None:
            raise ValueError("model file lacks the feature map section")
        threshold_at = as_filter(model, featmap).threshold_at
    rows = [0] * (cfg.bins.count + 1)
    kept_rows = [0] * (cfg.bins.count + 1)
    kept_records = []
    for d in dets:
        rng_m = range_of(d, cfg.range_mode)
        idx = assign_bin(rng_m, cfg.bins)
        row = cfg.bins.count if idx is None else idx
        rows[row] += 1
        if d.score > threshold_at(rng_m):
            kept_rows[row] += 1
            kept_records.append(d)
    kept = DetectionSet(tuple(kept_records), dets.label_set, dets.source)
    out = Path(out_file) if out_file else Path(cfg.output_dir) / "filtered.csv"
    _write(out, serialize_detections(kept))
    for i in range(cfg.bins.count + 1):
        label = (f"[{cfg.bins.origin + i * cfg.bins.width:g},"
                 f"{cfg.bins.origin + (i + 1) * cfg.bins.width:g})"
                 if i < cfg.bins.count else f">={cfg.bins.span():g}")
        click.echo(f"bin {label}: kept {kept_rows[i]} rejected {rows[i] - kept_rows[i]}")
    click.echo(f"kept {len(kept)} of {len(dets)} -> {out}")


@main.command("train")
@click.argument("detections_file", type=click.Path(exists=True))
@config_option
@click.option("--gt", "gt_file", type=click.Path(exists=True), default=None,
              help="Ground truth; required for --targets f1.")
@click.option("--targets", type=click.Choice(["curve", "f1"]), default=None,
              help="Training target source [config key: train.targets].")
@click.option("--learning-rate", type=float, default=None,
              help="Initial step size [config key: train.learning_rate].")
@click.option("--epochs", type=int, default=None, help="Accepted steps [config key: train.epochs].")
@click.option("--train-seed", type=int, default=None,
              help="Weight init seed [config key: train.seed].")
@click.option("--out-dir", type=click.Path(), default=None,
              help="Output directory [config key: output_dir].")
@_guard
def cmd_train(detections_file, config_path, gt_file, targets, learning_rate,
              epochs, train_seed, out_dir):
    """Train the neural threshold predictor and write model plus loss trace."""
    cfg = load_run_config(config_path)
    updates = {}
    if targets is not None:
        updates["targets"] = targets
    if learning_rate is not None:
        updates["learning_rate"] = learning_rate
    if epochs is not None:
        updates["epochs"] = epochs
    if train_seed is not None:
        updates["seed"] = train_seed
    if updates:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, **updates))
    dets = load_detections(detections_file)
    curve, stats = _calibrate_pipeline(dets, cfg)
    featmap = FeatureMap.from_stats(stats, curve.d_max, cfg.bins)
    if cfg.train.targets == "f1":
        if gt_file is None:
            raise ValueError("--targets f1 needs --gt")
        gts = load_ground_truth(gt_file)
        samples = f1_target_samples(dets, gts, featmap, cfg.match,
                                    range_mode=cfg.range_mode)
        if len(samples) < 1:
            raise ValueError("no populated bins with ground truth to supervise on")
    else:
        samples = distill_samples(curve, featmap, cfg.train.grid_points)
    sizes = (3, *cfg.train.hidden, 1)
    model = init_model(cfg.train.seed, sizes)
    trained, trace = train(model, samples, TrainConfig(
        cfg.train.learning_rate, cfg.train.epochs, cfg.train.seed))
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    _write(out / "model.txt", serialize_model(trained, featmap))
    _write(out / "loss_trace.csv", loss_trace_csv(trace))
    click.echo(f"trained on {len(samples)} samples ({cfg.train.targets} targets): "
               f"loss {trace[0]:.6g} -> {trace[-1]:.6g} in {len(trace) - 1} steps")


@main.command("eval")
@click.argument("filtered_file", type=click.Path(exists=True))
@click.argument("gt_file", type=click.Path(exists=True))
@config_option
@click.option("--method", default="eval", show_default=True, help="Label for the report rows.")
@click.option("--out-dir", type=click.Path(), default=None,
              help="Output directory [config key: output_dir].")
@_guard
def cmd_eval(filtered_file, gt_file, config_path, method, out_dir):
    """Match a filtered set against ground truth and report metrics."""
    cfg = load_run_config(config_path)
    dets = load_detections(filtered_file)
    gts = load_ground_truth(gt_file)
    rep = evaluate(dets, gts, cfg.match, cfg.bins, cfg.range_mode, method=method)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    _write(out / "eval.csv", report_csv(rep))
    _write(out / "pr_curve.csv",
           pr_curve_csv(pr_curve_points(dets, gts, cfg.match)))
    text = report_text(rep)
    _write(out / "eval.txt", text)
    click.echo(text, nl=False)


@main.command("bench")
@click.argument("detections_file", type=click.Path(exists=True))
@click.argument("gt_file", type=click.Path(exists=True))
@config_option
@click.option("--out-dir", type=click.Path(), default=None,
              help="Output directory [config key: output_dir].")
@_guard
def cmd_bench(detections_file, gt_file, config_path, out_dir):
    """Compare every thresholding method on one detection set."""
    cfg = load_run_config(config_path)
    dets = load_detections(detections_file)
    gts = load_ground_truth(gt_file)
    bl = cfg.baselines
    reports = []

    def add(method, param, filtered):
        reports.append(evaluate(filtered, gts, cfg.match, cfg.bins,
                                cfg.range_mode, method=method, param=param,
                                with_ap=False))

    add("static-dual", "", apply_static_dual(
        dets, cfg.prefilter.near, cfg.prefilter.far, cfg.prefilter.split,
        cfg.range_mode))
    add("otsu", "", fit_binned_threshold(dets, "otsu", cfg.bins, cfg.range_mode).apply(dets, cfg.range_mode))
    add("niblack", f"k={bl.niblack_k:g}",
        fit_binned_threshold(dets, "niblack", cfg.bins, cfg.range_mode,
                             k=bl.niblack_k).apply(dets, cfg.range_mode))
    add("nick", f"k={bl.nick_k:g}",
        fit_binned_threshold(dets, "nick", cfg.bins, cfg.range_mode,
                             k=bl.nick_k).apply(dets, cfg.range_mode))
    for pct in bl.sweep:
        add("bernsen", f"{pct:g}%",
            fit_binned_threshold(dets, "bernsen", cfg.bins, cfg.range_mode,
                                 contrast_limit=pct / 100.0).apply(dets, cfg.range_mode))
    add("phansalkar", f"k={bl.phansalkar_k:g}",
        fit_binned_threshold(dets, "phansalkar", cfg.bins, cfg.range_mode,
                             k=bl.phansalkar_k, p=bl.phansalkar_p,
                             q=bl.phansalkar_q, r=bl.phansalkar_r).apply(dets, cfg.range_mode))
    for pct in bl.sweep:
        add("bradley", f"{pct:g}%",
            fit_binned_threshold(dets, "bradley", cfg.bins, cfg.range_mode,
                                 t_pct=pct).apply(dets, cfg.range_mode))
    curve, stats = _calibrate_pipeline(dets, cfg)
    add("adaptive-curve", "", apply_curve(dets, curve, cfg.range_mode))
    featmap = FeatureMap.from_stats(stats, curve.d_max, cfg.bins)
    samples = distill_samples(curve, featmap, cfg.train.grid_points)
    model = init_model(cfg.train.seed, (3, *cfg.train.hidden, 1))
    trained, _ = train(model, samples, TrainConfig(
        cfg.train.learning_rate, cfg.train.epochs, cfg.train.seed))
    add("nn", "", as_filter(trained, featmap).apply(dets, cfg.range_mode))

    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    _write(out / "bench.csv", report_csv(reports))
    click.echo(f"{'method':<16} {'param':<10} {'prec':>8} {'recall':>8} {'f1':>8} {'fp':>7}")
    for rep in reports:
        click.echo(f"{rep.method:<16} {rep.param:<10} {_num(rep.precision):>8} "
                   f"{_num(rep.recall):>8} {_num(rep.f1):>8} {rep.fp:>7}")
    click.echo(f"wrote {out / 'bench.csv'}")


@main.command("check-config")
@click.argument("config_file", type=click.Path(exists=True))
@_guard
def cmd_check_config(config_file):
    """Validate a run configuration file and echo the effective settings."""
    cfg = load_run_config(config_file)
    click.echo("config OK")
    click.echo(run_config_json(cfg), nl=False)


if __name__ == "__main__":
    main()

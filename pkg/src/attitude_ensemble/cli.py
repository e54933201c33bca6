"""Command-line entry point: generate, annotate, train, ensemble-eval, run."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import align as align_mod
from .attitude import CLASS_NAMES, BinningConfig, classify_many
from .dataset import load_dataset
from .ensemble import (
    ModelEntry,
    ensemble_predict,
    load_registry,
    model_predictions,
    read_registry,
    votes_from_predictions,
    write_registry,
    write_votes_csv,
)
from .errors import AttitudeError
from .evaluate import compare, render_heatmap, report, write_matrix_csv
from .flightsim import DegradationSpec, generate_dataset, parse_views, simulate_trajectory
from .nn import DataSplit, Network, OptimizerConfig, architecture, fit, save_checkpoint, write_log_csv
from .nn.network import ARCHITECTURES

log = logging.getLogger("attitude_ensemble")

DEGRADE_KEYS = ("blur_sigma_px", "glare_strength", "darkness", "occlusion_fraction", "noise_std", "seed")


class CliError(Exception):
    pass


def _require_seed(seed, what="--seed"):
    if seed is None:
        raise CliError(f"{what} is mandatory (no wall-clock default)")
    return int(seed)


def parse_degrade(text: str) -> tuple[str, dict]:
    """``VIEW:key=value,key=value`` -> (view, kwargs)."""
    if ":" not in text:
        raise CliError(f"bad --degrade {text!r}; expected VIEW:key=value,...")
    view, _, body = text.partition(":")
    kwargs = {}
    for item in filter(None, body.split(",")):
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in DEGRADE_KEYS:
            raise CliError(f"unknown degradation key {key!r}; expected one of {', '.join(DEGRADE_KEYS)}")
        kwargs[key] = int(value) if key == "seed" else float(value)
    return view.strip(), kwargs


def build_degradations(views, base: dict | None, per_view: dict, seed: int) -> dict:
    """Every view gets ``base`` overridden by its own entry; seeds default to seed*100 + view index."""
    out = {}
    for i, v in enumerate(views):
        kw = dict(base or {})
        kw.update(per_view.get(v.view_id, {}))
        kw.setdefault("seed", seed * 100 + i)
        out[v.view_id] = DegradationSpec(**kw)
    return out


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    seed = _require_seed(args.seed)
    if args.out is None:
        raise CliError("--out is required")
    traj = simulate_trajectory(args.duration, args.rate, seed, args.pitch_bound, args.roll_bound)
    views = parse_views(args.views, args.size)
    per_view = dict(args.degrade_map or {})
    for text in args.degrade or []:
        view, kw = parse_degrade(text)
        per_view.setdefault(view, {}).update(kw)
    base = dict(args.mild_degradation) if args.mild_degradation else {}
    degrades = build_degradations(views, base, per_view, seed)
    binning = BinningConfig(args.alpha)
    manifest = generate_dataset(
        traj,
        views,
        degrades,
        binning,
        args.out,
        test_fraction=args.test_fraction,
        split_seed=seed,
        extra_meta={"trajectory": {"duration_s": args.duration, "sample_rate_hz": args.rate, "seed": seed,
                                   "pitch_bound": args.pitch_bound, "roll_bound": args.roll_bound}},
    )
    hist = np.bincount(classify_many(traj.pitch, traj.roll, binning), minlength=len(CLASS_NAMES))
    print(f"manifest: {manifest.labels_path}")
    print(f"split: {manifest.split_path}")
    print(f"frames: {len(traj)} x {len(views)} views = {len(manifest.rows)} images")
    print("class histogram (per time step):")
    for c, (name, n) in enumerate(zip(CLASS_NAMES, hist)):
        print(f"  {c} {name:6s} {n}")
    return 0


# --------------------------------------------------------------------------
# annotate
# --------------------------------------------------------------------------


def cmd_annotate(args) -> int:
    if args.fdr is None or args.manifest is None or args.out is None:
        raise CliError("--fdr, --manifest and --out are required")
    fdr = align_mod.parse_fdr_csv(args.fdr)
    frames = align_mod.parse_frame_manifest(args.manifest)
    result = align_mod.align(frames, fdr, align_mod.AlignmentConfig(args.tolerance_ms), BinningConfig(args.alpha))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labeled, skipped = out / "labeled_manifest.csv", out / "skip_report.csv"
    align_mod.write_alignment(result, labeled, skipped)
    print(f"labeled manifest: {labeled} ({len(result.labeled)} frames)")
    print(f"skip report: {skipped} ({len(result.skipped)} frames)")
    return 0


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------


def train_one(ds, view, arch, epochs, seed, opt: OptimizerConfig, out_dir: Path, model_id=None, progress=None):
    """Train one per-view model, write its checkpoint and log; returns (ModelEntry, net, history)."""
    x_tr, y_tr, _, _ = ds.arrays(view, "train")
    try:
        x_te, y_te, _, _ = ds.arrays(view, "test")
    except AttitudeError:
        x_te = y_te = None
    h, w = x_tr.shape[1:3]
    net = Network(architecture(arch, h, w), seed=seed)
    _, history = fit(net, DataSplit(x_tr, y_tr, x_te, y_te), opt, epochs, seed, progress=progress)
    net.meta.update({"view": view, "arch": arch, "batch_size": opt.batch_size, "learning_rate": opt.learning_rate})
    out_dir.mkdir(parents=True, exist_ok=True)
    model_id = model_id or f"{view}-{arch}"
    ckpt = out_dir / f"{model_id}.ckpt"
    save_checkpoint(net, ckpt)
    write_log_csv(out_dir / f"{model_id}.log.csv", history)
    return ModelEntry(model_id, view, ckpt, arch), net, history


def cmd_train(args) -> int:
    seed = _require_seed(args.seed)
    if args.dataset is None or args.view is None or args.out is None:
        raise CliError("--dataset, --view and --out are required")
    opt = OptimizerConfig(args.lr, args.beta1, args.beta2, args.adam_eps, args.batch_size)
    entry, _, _ = train_one(
        load_dataset(args.dataset), args.view, args.arch, args.epochs, seed, opt, Path(args.out), args.model_id,
        progress=lambda r: print(f"epoch {r.epoch}: loss {r.train_loss:.4f} acc {r.train_acc:.4f} "
                                 f"test_acc {r.test_acc:.4f}", flush=True),
    )
    print(f"checkpoint: {entry.checkpoint_path}")
    print(f"log: {entry.checkpoint_path.with_suffix('.log.csv')}")
    if args.registry:
        reg_path = Path(args.registry)
        entries = [e for e in read_registry(reg_path) if e.model_id != entry.model_id] if reg_path.exists() else []
        write_registry(reg_path, entries + [entry])
        print(f"registry: {reg_path}")
    return 0


# --------------------------------------------------------------------------
# ensemble-eval
# --------------------------------------------------------------------------


def _row_labels(entries):
    """Table row label per model: its architecture, or its id when an (arch, view) pair repeats."""
    seen = {}
    for e in entries:
        seen[(e.arch, e.view)] = seen.get((e.arch, e.view), 0) + 1
    return {e.model_id: e.arch if seen[(e.arch, e.view)] == 1 else e.model_id for e in entries}


def run_ensemble_eval(registry_path, dataset_path, out_dir, exclude_views=(), include=None, subset="test"):
    registry = load_registry(registry_path)
    ds = load_dataset(dataset_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    primary = registry.select(include, exclude_views)
    all_entries = registry.select(include, ())
    needed_views = [v for v in registry.views if any(e.view == v for e in all_entries)]

    frames, truth_by_ts = {}, {}
    for view in needed_views:
        images, labels, _, stamps = ds.arrays(view, subset)
        for img, lab, t in zip(images, labels, stamps):
            frames[(int(t), view)] = img
            truth_by_ts[int(t)] = int(lab)
    records = ensemble_predict(registry, frames, include, exclude_views)
    timestamps = [r.timestamp_ms for r in records]
    truth = np.array([truth_by_ts[t] for t in timestamps])

    write_votes_csv(out / "votes.csv", records)
    reports = []
    rows = _row_labels(all_entries)
    # Per-model accuracy, including models excluded from the primary vote.
    preds = model_predictions(registry, frames, all_entries, timestamps)
    mdir = out / "matrices"
    mdir.mkdir(exist_ok=True)
    for e in all_entries:
        rep = report(rows[e.model_id], e.view, truth, preds[e.model_id][0])
        reports.append(rep)
        write_matrix_csv(mdir / f"{e.model_id}.csv", rep.matrix)
        render_heatmap(rep.matrix, mdir / f"{e.model_id}.svg", f"{e.model_id} ({e.view})")

    n_primary = len(primary)
    name = f"ensemble ({n_primary} models"
    name += f", excluding {', '.join(exclude_views)})" if exclude_views else ")"
    ens = report(name, "ensemble", truth, [r.final_class for r in records], kind="ensemble", n_voters=n_primary)
    reports.append(ens)
    write_matrix_csv(out / "ensemble_matrix.csv", ens.matrix)
    render_heatmap(ens.matrix, out / "ensemble_matrix.svg", name)
    outputs = {"votes": out / "votes.csv"}

    if exclude_views and len(all_entries) > n_primary:
        all_records = votes_from_predictions(timestamps, [e.model_id for e in all_entries], preds)
        write_votes_csv(out / "votes_all.csv", all_records)
        all_name = f"ensemble ({len(all_entries)} models, all views)"
        ens_all = report(all_name, "ensemble", truth, [r.final_class for r in all_records], kind="ensemble",
                         n_voters=len(all_entries))
        reports.append(ens_all)
        write_matrix_csv(out / "ensemble_all_matrix.csv", ens_all.matrix)
        render_heatmap(ens_all.matrix, out / "ensemble_all_matrix.svg", all_name)
        outputs["votes_all"] = out / "votes_all.csv"

    table = compare(reports)
    table.write_csv(out / "comparison.csv", "frame_weighted")
    table.write_csv(out / "comparison_class_avg.csv", "class_averaged")
    md = [f"# Ensemble evaluation ({subset} subset, {len(timestamps)} frames)", "",
          f"Primary ensemble: {n_primary} voters.", "",
          "## Frame-weighted accuracy (headline)", "", table.to_markdown("frame_weighted"),
          "## Class-averaged accuracy", "", table.to_markdown("class_averaged")]
    (out / "comparison.md").write_text("\n".join(md), encoding="utf-8")
    return records, reports, table, n_primary, outputs


def cmd_ensemble_eval(args) -> int:
    if args.registry is None or args.dataset is None or args.out is None:
        raise CliError("--registry, --dataset and --out are required")
    records, reports, table, n_voters, outputs = run_ensemble_eval(
        args.registry, args.dataset, args.out, tuple(args.exclude_view or ()), args.include_model, args.subset
    )
    print(f"ensemble: {n_voters} voters over {len(records)} frames")
    for rep in reports:
        label = f"{rep.row} [{rep.column}]"
        print(f"  {label:50s} acc {100 * rep.accuracy:6.2f}%  class-avg {100 * rep.class_averaged:6.2f}%")
    for key, path in outputs.items():
        print(f"{key}: {path}")
    print(f"comparison: {Path(args.out) / 'comparison.csv'}")
    return 0


# --------------------------------------------------------------------------
# run (config-driven pipeline)
# --------------------------------------------------------------------------


GENERATE_DEFAULTS = {
    "duration": 600.0,
    "rate": 10.0,
    "views": "all",
    "alpha": 3.0,
    "size": 64,
    "pitch_bound": 10.0,
    "roll_bound": 15.0,
    "test_fraction": 0.2,
    "degrade": None,
}

RUN_KEYS = {
    None: {"seed", "out_dir", "generate", "train", "ensemble"},
    "generate": set(GENERATE_DEFAULTS) | {"degradations", "base_degradation"},
    "train": {"arch", "epochs", "batch_size", "learning_rate", "beta1", "beta2", "epsilon"},
    "ensemble": {"exclude_views", "include_models"},
}


def _check_run_config(cfg: dict) -> None:
    for section, allowed in RUN_KEYS.items():
        body = cfg if section is None else cfg.get(section, {})
        if not isinstance(body, dict):
            raise CliError(f"config section {section!r} must be an object")
        unknown = sorted(set(body) - allowed)
        if unknown:
            where = f"section {section!r}" if section else "top level"
            raise CliError(f"unknown config keys {unknown} at {where}; expected {sorted(allowed)}")


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    _check_run_config(cfg)
    seed = _require_seed(cfg.get("seed"), "config 'seed'")
    out = Path(args.out or cfg.get("out_dir") or "")
    if not str(out):
        raise CliError("output directory missing: give --out or config 'out_dir'")
    g = cfg.get("generate", {})
    t = cfg.get("train", {})
    e = cfg.get("ensemble", {})

    data_dir = out / "data"
    gen_args = _namespace(GENERATE_DEFAULTS, g, seed=seed, out=str(data_dir))
    gen_args.degrade_map = g.get("degradations", {})
    gen_args.mild_degradation = g.get("base_degradation")
    cmd_generate(gen_args)

    ds = load_dataset(data_dir)
    opt = OptimizerConfig(t.get("learning_rate", 1e-3), t.get("beta1", 0.9), t.get("beta2", 0.999),
                          t.get("epsilon", 1e-8), t.get("batch_size", 64))
    archs = t.get("arch", "tiny-cnn-a")
    entries = []
    for view in ds.views:
        view_archs = archs.get(view, ["tiny-cnn-a"]) if isinstance(archs, dict) else archs
        if isinstance(view_archs, str):
            view_archs = [view_archs]
        for arch in view_archs:
            entry, _, _ = train_one(ds, view, arch, t.get("epochs", 30), seed, opt, out / "models")
            print(f"trained {entry.model_id}: {entry.checkpoint_path}")
            entries.append(entry)
    write_registry(out / "registry.csv", entries)
    records, reports, table, n_voters, _ = run_ensemble_eval(
        out / "registry.csv", data_dir, out / "report", tuple(e.get("exclude_views", ())), e.get("include_models")
    )
    print(f"ensemble: {n_voters} voters over {len(records)} frames")
    print(table.to_markdown())
    return 0


def _load_config(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc


def _namespace(defaults, overrides, **fixed):
    ns = argparse.Namespace(**defaults)
    for k, v in overrides.items():
        if k in defaults:
            setattr(ns, k, v)
    for k, v in fixed.items():
        setattr(ns, k, v)
    return ns


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="attitude-ensemble", description=__doc__, formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a synthetic multi-view dataset", formatter_class=fmt)
    g.add_argument("--config", help="JSON config; its 'generate' section supplies flag defaults")
    g.add_argument("--duration", type=float, default=GENERATE_DEFAULTS["duration"], help="flight length in seconds")
    g.add_argument("--rate", type=float, default=GENERATE_DEFAULTS["rate"], help="samples per second")
    g.add_argument("--views", default="all", help="comma-separated view ids, or 'all'")
    g.add_argument("--seed", type=int, default=None, help="trajectory/split seed (mandatory)")
    g.add_argument("--out", default=None, help="output dataset directory")
    g.add_argument("--alpha", type=float, default=3.0, help="class threshold in degrees")
    g.add_argument("--size", type=int, default=64, help="image width and height in pixels")
    g.add_argument("--pitch-bound", type=float, default=10.0, help="max |pitch| in degrees")
    g.add_argument("--roll-bound", type=float, default=15.0, help="max |roll| in degrees")
    g.add_argument("--test-fraction", type=float, default=0.2, help="stratified test share")
    g.add_argument("--degrade", action="append", default=None,
                   help="per-view degradation VIEW:key=value,...; keys: " + ", ".join(DEGRADE_KEYS))
    g.add_argument("--mild", dest="mild_degradation", action="store_const",
                   const={"blur_sigma_px": 0.5, "noise_std": 4.0, "glare_strength": 0.15, "darkness": 0.1},
                   default=None, help="apply mild blur/noise/glare/darkness to every view")
    g.set_defaults(func=cmd_generate, degrade_map=None, section="generate")

    a = sub.add_parser("annotate", help="label frames from an FDR log by timestamp", formatter_class=fmt)
    a.add_argument("--config", help="JSON config; its 'annotate' section supplies flag defaults")
    a.add_argument("--fdr", default=None, help="FDR CSV: timestamp_ms,pitch_deg,roll_deg")
    a.add_argument("--manifest", default=None, help="frame CSV: frame_path,view,timestamp_ms")
    a.add_argument("--out", default=None, help="output directory")
    a.add_argument("--tolerance-ms", type=float, default=100, help="max |frame - FDR| time gap")
    a.add_argument("--alpha", type=float, default=3.0, help="class threshold in degrees")
    a.set_defaults(func=cmd_annotate, section="annotate")

    t = sub.add_parser("train", help="train one per-view classifier", formatter_class=fmt)
    t.add_argument("--config", help="JSON config; its 'train' section supplies flag defaults")
    t.add_argument("--dataset", default=None, help="dataset directory from 'generate'")
    t.add_argument("--view", default=None, help="view id to train on")
    t.add_argument("--arch", default="tiny-cnn-a", help=f"architecture tag ({', '.join(ARCHITECTURES)}) or spec text")
    t.add_argument("--epochs", type=int, default=30, help="training epochs")
    t.add_argument("--batch-size", type=int, default=64, help="mini-batch size (256 at full scale)")
    t.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    t.add_argument("--beta1", type=float, default=0.9, help="Adam beta1")
    t.add_argument("--beta2", type=float, default=0.999, help="Adam beta2")
    t.add_argument("--adam-eps", type=float, default=1e-8, help="Adam epsilon")
    t.add_argument("--seed", type=int, default=None, help="init/shuffle/dropout seed (mandatory)")
    t.add_argument("--out", default=None, help="output directory for checkpoint and log")
    t.add_argument("--model-id", default=None, help="model id (default VIEW-ARCH)")
    t.add_argument("--registry", default=None, help="registry CSV to add this model to")
    t.set_defaults(func=cmd_train, section="train")

    e = sub.add_parser("ensemble-eval", help="majority-vote the registry and write reports", formatter_class=fmt)
    e.add_argument("--config", help="JSON config; its 'ensemble' section supplies flag defaults")
    e.add_argument("--registry", default=None, help="registry CSV: model_id,view,checkpoint_path,arch")
    e.add_argument("--dataset", default=None, help="dataset directory")
    e.add_argument("--exclude-view", action="append", default=None, help="drop a view's models from the vote")
    e.add_argument("--include-model", action="append", default=None, help="vote only with these model ids")
    e.add_argument("--subset", default="test", choices=("train", "test"), help="dataset split to evaluate")
    e.add_argument("--out", default=None, help="report directory")
    e.set_defaults(func=cmd_ensemble_eval, section="ensemble")

    r = sub.add_parser("run", help="generate, train every view, ensemble-eval from one config", formatter_class=fmt)
    r.add_argument("--config", required=True, help="JSON pipeline config")
    r.add_argument("--out", default=None, help="output directory (overrides config 'out_dir')")
    r.set_defaults(func=cmd_run, section=None)
    return p


def _apply_config_defaults(parser, argv):
    """Re-parse with flag defaults taken from the chosen subcommand's config section."""
    args = parser.parse_args(argv)
    if args.section is None or getattr(args, "config", None) is None:
        return args
    cfg = _load_config(args.config)
    section = dict(cfg.get(args.section, {}))
    if "seed" in cfg and "seed" not in section:
        section["seed"] = cfg["seed"]
    if args.section == "generate":
        args.degrade_map = section.pop("degradations", None)
        base = section.pop("base_degradation", None)
        if base is not None:
            args.mild_degradation = base
    if args.section == "ensemble" and "exclude_views" in section:
        section["exclude_view"] = section.pop("exclude_views")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = set(section) - known
    if unknown:
        raise CliError(f"unknown keys in config section '{args.section}': {sorted(unknown)}")
    extra = {k: getattr(args, k) for k in ("degrade_map", "mild_degradation") if hasattr(args, k)}
    sub.set_defaults(**section)
    args = parser.parse_args(argv)
    for k, v in extra.items():
        setattr(args, k, v)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config_defaults(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except (CliError, AttitudeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

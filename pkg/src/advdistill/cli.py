"""Command-line surface: dataset generation, training runs, eval, compare.

Exit codes: 0 success, 1 user error (bad config, missing prerequisites,
refusals), 2 internal error. Config fields can be overridden with repeated
``--set section.key=value`` flags or direct ``--section.key=value`` tokens.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import (ConfigError, ExperimentConfig, apply_overrides, from_dict,
                     load_config)
from .distill import (evaluate_detector, format_delta, format_map, pretrain_teacher,
                      run_distill, train_baseline)
from .evaluation import write_detections_csv
from .shapes_data import generate_dataset, load_dataset

__all__ = ["main"]

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    # Argparse exits with code 2 on usage errors; route them through
    # ConfigError so bad invocations report as user errors (exit 1).
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="advdistill",
                     description="Adversarial feature distillation at desk scale")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                       help="override a config field (repeatable)")

    p = sub.add_parser("generate-data", help="render the shapes dataset")
    common(p)
    p.add_argument("--out", help="dataset directory (default: config dataset_dir)")
    p.add_argument("--force", action="store_true", help="overwrite an existing dataset")

    p = sub.add_parser("train-teacher", help="pretrain the teacher detector")
    common(p)
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--out", help="run directory (default: <output_dir>/teacher)")
    p.add_argument("--force", action="store_true", help="redo a completed run")

    p = sub.add_parser("train-baseline", help="train the student without distillation")
    common(p)
    p.add_argument("--seed", help="comma-separated seeds (default: config seeds)")
    p.add_argument("--force", action="store_true", help="redo completed runs")

    p = sub.add_parser("distill", help="two-stage adversarial distillation")
    common(p)
    p.add_argument("--seed", help="comma-separated seeds (default: config seeds)")
    p.add_argument("--teacher-ckpt",
                   help="teacher checkpoint (default: <output_dir>/teacher/ckpt_final.ckpt)")
    p.add_argument("--force", action="store_true", help="redo completed runs")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="val", choices=("train", "val"))
    p.add_argument("--detections", help="write detections CSV to this path")

    p = sub.add_parser("compare", help="compare completed runs against a baseline")
    p.add_argument("runs", nargs="+", help="run directories to compare")
    p.add_argument("--baseline", required=True, help="baseline run directory")
    p.add_argument("--out", default=".", help="directory for report.csv / report.txt")
    return parser


def _load_cfg(args) -> ExperimentConfig:
    if not args.set:
        return load_config(args.config)
    path = Path(args.config)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_dict(apply_overrides(payload, args.set))


def _seeds(args, cfg: ExperimentConfig) -> list[int]:
    if args.seed is None:
        return list(cfg.seeds)
    try:
        return [int(s) for s in str(args.seed).split(",") if s]
    except ValueError as exc:
        raise ConfigError(f"--seed must be comma-separated integers: {args.seed!r}") from exc


def _require_dataset(cfg: ExperimentConfig):
    path = Path(cfg.dataset_dir)
    if not (path / "manifest.json").exists():
        raise ConfigError(f"no dataset at {path}; run 'advdistill generate-data' first")
    return load_dataset(path)


def _check_run_dir(run_dir: Path, force: bool) -> None:
    if (run_dir / "summary.json").exists() and not force:
        raise ConfigError(f"{run_dir} already holds a completed run; pass --force to redo")


def _with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    import dataclasses
    return dataclasses.replace(cfg, seed=seed)


def _cmd_generate_data(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out) if args.out else Path(cfg.dataset_dir)
    generate_dataset(cfg.data, out, force=args.force)
    print(f"dataset written to {out}")
    return 0


def _cmd_train_teacher(args) -> int:
    cfg = _load_cfg(args)
    if args.seed is not None:
        cfg = _with_seed(cfg, args.seed)
    dataset = _require_dataset(cfg)
    run_dir = Path(args.out) if args.out else Path(cfg.output_dir) / "teacher"
    _check_run_dir(run_dir, args.force)
    summary = pretrain_teacher(cfg, dataset, run_dir)
    print(f"teacher val mAP {format_map(summary['val_map_final'])} "
          f"(best {format_map(summary['val_map_best'])}) -> {run_dir}")
    return 0


def _cmd_train_baseline(args) -> int:
    cfg = _load_cfg(args)
    dataset = _require_dataset(cfg)
    for seed in _seeds(args, cfg):
        run_dir = Path(cfg.output_dir) / f"baseline_seed{seed}"
        _check_run_dir(run_dir, args.force)
        summary = train_baseline(_with_seed(cfg, seed), dataset, run_dir, seed)
        print(f"baseline seed {seed}: val mAP {format_map(summary['val_map_final'])} "
              f"-> {run_dir}")
    return 0


def _cmd_distill(args) -> int:
    cfg = _load_cfg(args)
    dataset = _require_dataset(cfg)
    ckpt = Path(args.teacher_ckpt) if args.teacher_ckpt else (
        Path(cfg.output_dir) / "teacher" / "ckpt_final.ckpt")
    if not ckpt.exists():
        raise ConfigError(f"no teacher checkpoint at {ckpt}; "
                          f"run 'advdistill train-teacher' first")
    for seed in _seeds(args, cfg):
        run_dir = Path(cfg.output_dir) / f"distill_seed{seed}"
        _check_run_dir(run_dir, args.force)
        summary = run_distill(_with_seed(cfg, seed), dataset, run_dir, seed, ckpt)
        print(f"distill seed {seed}: val mAP {format_map(summary['val_map_final'])} "
              f"-> {run_dir}")
    return 0


def _cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .distill import build_distill_models  # noqa: F401  (group layout reference)
    from .models import build_head, build_student, build_teacher
    from .anchors import generate_anchors

    cfg = _load_cfg(args)
    dataset = _require_dataset(cfg)
    loaded, _ = load_checkpoint(args.checkpoint)
    groups = loaded.groups()
    if "student" in groups:
        net, params = build_student(cfg.student, cfg.teacher, cfg.seed)
    elif "teacher" in groups:
        net, params = build_teacher(cfg.teacher, cfg.seed)
    else:
        raise ConfigError(f"{args.checkpoint} holds neither a student nor a teacher")
    head, head_params = build_head(cfg.teacher, cfg.anchors, cfg.distill.num_classes,
                                   cfg.seed)
    params.update(head_params)
    for name, tensor in params.items():
        if name not in loaded:
            raise ConfigError(f"checkpoint is missing parameter {name}")
        if tuple(loaded[name].shape) != tuple(tensor.shape):
            raise ConfigError(f"checkpoint parameter {name} has shape "
                              f"{loaded[name].shape}, expected {tensor.shape}")
        tensor.data[...] = loaded[name].data
    anchors = generate_anchors(cfg.anchors)
    mean_ap = evaluate_detector(net, head, dataset, args.split, anchors, cfg)
    print(f"mAP ({args.split}): {format_map(mean_ap)}")

    if args.detections:
        import math as _math
        from .models import detect
        from .shapes_data import load_batch
        from .tensor import Tensor

        d = cfg.distill
        ids = dataset.split_ids(args.split)
        preds = []
        for b in range(_math.ceil(len(ids) / d.batch_size)):
            images, _ = load_batch(dataset, args.split, b, d.batch_size)
            feats = net.forward(Tensor(images))
            logits, offsets = head.forward(feats)
            preds.extend(detect(logits.data, offsets.data, anchors, d.num_classes,
                                d.score_thresh, d.nms_iou, d.top_k))
        write_detections_csv(args.detections, preds, [f"{i:06d}" for i in ids])
        print(f"detections written to {args.detections}")
    return 0


def _read_summary(run_dir: Path):
    path = run_dir / "summary.json"
    if not path.exists():
        log.warning("skipping %s: no summary.json (incomplete run)", run_dir)
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_compare(args) -> int:
    import numpy as np

    baseline_dir = Path(args.baseline)
    baseline = _read_summary(baseline_dir)
    if baseline is None:
        raise ConfigError(f"baseline run {baseline_dir} is incomplete")
    base_map = baseline["val_map_final"]

    rows = []
    for run in args.runs:
        run_dir = Path(run)
        summary = _read_summary(run_dir)
        if summary is None:
            continue
        rows.append({
            "run": run_dir.name,
            "teacher_map": summary.get("teacher_map"),
            "student_map": summary["val_map_final"],
            "delta": summary["val_map_final"] - base_map,
        })
    if not rows:
        raise ConfigError("no completed runs to compare")

    median = {
        "run": "median",
        "teacher_map": None,
        "student_map": float(np.median([r["student_map"] for r in rows])),
    }
    median["delta"] = median["student_map"] - base_map
    teacher_maps = [r["teacher_map"] for r in rows if r["teacher_map"] is not None]
    if teacher_maps:
        median["teacher_map"] = float(np.median(teacher_maps))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def fmt_teacher(v):
        return format_map(v) if v is not None else "-"

    with open(out_dir / "report.csv", "w", encoding="utf-8") as fh:
        fh.write("run,teacher_mAP,student_mAP,delta\n")
        for row in rows + [median]:
            fh.write(f"{row['run']},{fmt_teacher(row['teacher_map'])},"
                     f"{format_map(row['student_map'])},{format_delta(row['delta'])}\n")

    width = max(len(r["run"]) for r in rows + [median])
    lines = [f"baseline: {baseline_dir.name} (student mAP {format_map(base_map)})",
             f"{'run':<{width}}  {'teacher':>8}  {'student':>8}  {'delta':>6}"]
    for row in rows + [median]:
        lines.append(f"{row['run']:<{width}}  {fmt_teacher(row['teacher_map']):>8}  "
                     f"{format_map(row['student_map']):>8}  {format_delta(row['delta']):>6}")
    text = "\n".join(lines)
    (out_dir / "report.txt").write_text(text + "\n")
    print(text)
    return 0


_COMMANDS = {
    "generate-data": _cmd_generate_data,
    "train-teacher": _cmd_train_teacher,
    "train-baseline": _cmd_train_baseline,
    "distill": _cmd_distill,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args, unknown = parser.parse_known_args(argv)
        overrides = []
        for token in unknown:
            body = token[2:] if token.startswith("--") else token
            if "=" in body and "." in body.split("=", 1)[0]:
                overrides.append(body)
            else:
                raise ConfigError(f"unrecognized argument: {token}")
        if overrides:
            if not hasattr(args, "set"):
                raise ConfigError(f"{args.command} takes no config overrides")
            args.set = list(args.set) + overrides
        logging.basicConfig(
            level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s")
        return _COMMANDS[args.command](args)
    except (ConfigError, FileExistsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        logging.getLogger(__name__).exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

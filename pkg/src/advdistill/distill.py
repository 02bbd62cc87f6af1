"""Two-stage adversarial distillation: critic/generator alternation, then a
plain detection fine-tune. Also hosts teacher pretraining, the baseline
student run, and the seed-sweep experiment that compares them.

Per-scale critics score teacher features (true samples) against student
features (fake samples). The critic phase minimizes
``L_D = sum_k mean(D_k(teacher_k)) - sum_k mean(D_k(student_k))`` on the
critic weights, clamping them to [-c, c] after every step; the generator
phase minimizes ``L_G = sum_k mean(D_k(student_k)) + L_conf + L_loc`` on the
student and head. Batch means absorb the 1/N normalization.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .anchors import AnchorSet, generate_anchors, match_anchors
from .boxes import BoxList
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_hash
from .evaluation import evaluate_map
from .losses import conf_loss, loc_loss
from .models import (DNet, SsdHead, build_dnet, build_head, build_student,
                     build_teacher, detect)
from .optim import Adam, ParamSet, SGD
from .shapes_data import Dataset, epoch_order, load_batch
from .tensor import Tape, Tensor, backward, index0, reduce_mean

__all__ = [
    "LossReport",
    "FREEZE_PLANS",
    "FreezeViolationError",
    "TrainingDiverged",
    "DistillModels",
    "critic_step",
    "generator_step",
    "detection_step",
    "pretrain_teacher",
    "train_baseline",
    "run_stage1",
    "run_stage2",
    "run_distill",
    "run_experiment",
    "evaluate_detector",
    "format_delta",
    "format_map",
]

log = logging.getLogger(__name__)

METRICS_COLUMNS = ("phase", "epoch", "L_Dt", "L_Ds", "L_conf", "L_loc", "L_D", "L_G",
                   "val_mAP")

# Frozen parameter groups per phase; the teacher never trains.
FREEZE_PLANS = {
    "critic": frozenset({"teacher", "student", "head"}),
    "generator": frozenset({"teacher", "dnet"}),
    "stage2": frozenset({"teacher", "dnet"}),
}


class FreezeViolationError(RuntimeError):
    """A step ran under the wrong freeze plan or mutated a frozen group."""


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; carries the offending phase/epoch/step."""

    def __init__(self, phase: str, epoch: int, step: int, batch_index: int, losses: dict):
        super().__init__(f"non-finite loss in {phase} at epoch {epoch}, step {step}, "
                         f"batch {batch_index}: {losses}")
        self.phase = phase
        self.epoch = epoch
        self.step = step
        self.batch_index = batch_index
        self.losses = losses


@dataclass
class LossReport:
    """One training step's loss terms. Fields a phase does not compute are 0."""

    l_dt: float = 0.0
    l_ds: float = 0.0
    l_conf: float = 0.0
    l_loc: float = 0.0
    l_d: float = 0.0
    l_g: float = 0.0
    step: int = 0
    phase: str = ""

    def values(self) -> dict:
        return {"L_Dt": self.l_dt, "L_Ds": self.l_ds, "L_conf": self.l_conf,
                "L_loc": self.l_loc, "L_D": self.l_d, "L_G": self.l_g}

    def finite(self) -> bool:
        return all(math.isfinite(v) for v in self.values().values())


@dataclass
class DistillModels:
    """The four networks plus their merged parameter registry."""

    teacher: object
    student: object
    head: SsdHead
    dnet: DNet
    params: ParamSet
    anchors: AnchorSet


def _require_plan(params: ParamSet, phase: str) -> None:
    expected = FREEZE_PLANS[phase]
    present = params.groups()
    if (expected & present) != (params.frozen & present):
        raise FreezeViolationError(
            f"{phase} step requires frozen groups {sorted(expected & present)}, "
            f"got {sorted(params.frozen & present)}")


def _sum_scale_means(score_vectors: Sequence[Tensor]) -> Tensor:
    total = reduce_mean(score_vectors[0])
    for scores in score_vectors[1:]:
        total = total + reduce_mean(scores)
    return total


def _batch_detection_losses(logits: Tensor, offsets: Tensor, matches) -> tuple[Tensor, Tensor]:
    """Batch-mean confidence and localization losses from head outputs."""
    n = logits.shape[0]
    conf_total = None
    loc_total = None
    for i in range(n):
        c = conf_loss(index0(logits, i), matches[i])
        l = loc_loss(index0(offsets, i), matches[i])
        conf_total = c if conf_total is None else conf_total + c
        loc_total = l if loc_total is None else loc_total + l
    return conf_total * (1.0 / n), loc_total * (1.0 / n)


def critic_step(models: DistillModels, images: np.ndarray, optimizer: Adam,
                clip: float, step: int) -> LossReport:
    """One critic update: push teacher scores down, student scores up.

    Teacher and student forwards run off-tape (their grads are never used in
    this phase); only the critic ops record. After the Adam step every
    critic weight is clamped to [-clip, +clip].
    """
    _require_plan(models.params, "critic")
    x = Tensor(images)
    teacher_feats = [f.detach() for f in models.teacher.forward(x)]
    student_feats = [f.detach() for f in models.student.forward(x)]

    models.params.zero_grad()
    with Tape() as tape:
        l_dt = _sum_scale_means(models.dnet.forward(teacher_feats))
        l_ds = _sum_scale_means(models.dnet.forward(student_feats))
        l_d = l_dt - l_ds
    backward(l_d, tape)
    optimizer.step()
    models.params.clip_group("dnet", clip)
    return LossReport(l_dt=l_dt.item(), l_ds=l_ds.item(), l_d=l_d.item(),
                      step=step, phase="critic")


def generator_step(models: DistillModels, images: np.ndarray, gt: Sequence[BoxList],
                   optimizer: Adam, pos_iou: float, variances, neg_pos_ratio: int,
                   step: int) -> LossReport:
    """One student/head update against the frozen critics plus detection losses."""
    _require_plan(models.params, "generator")
    matches = [match_anchors(models.anchors, g, pos_iou, variances) for g in gt]

    models.params.zero_grad()
    with Tape() as tape:
        student_feats = models.student.forward(Tensor(images))
        d_term = _sum_scale_means(models.dnet.forward(student_feats))
        logits, offsets = models.head.forward(student_feats)
        l_conf, l_loc = _batch_detection_losses(logits, offsets, matches)
        l_g = d_term + l_conf + l_loc
    backward(l_g, tape)
    optimizer.step()
    return LossReport(l_ds=d_term.item(), l_conf=l_conf.item(), l_loc=l_loc.item(),
                      l_g=l_g.item(), step=step, phase="generator")


def detection_step(net, head: SsdHead, params: ParamSet, anchors: AnchorSet,
                   images: np.ndarray, gt: Sequence[BoxList], optimizer,
                   pos_iou: float, variances, neg_pos_ratio: int, step: int,
                   phase: str) -> LossReport:
    """Plain SSD-style update (teacher pretraining, baseline, stage 2)."""
    matches = [match_anchors(anchors, g, pos_iou, variances) for g in gt]
    params.zero_grad()
    with Tape() as tape:
        feats = net.forward(Tensor(images))
        logits, offsets = head.forward(feats)
        l_conf, l_loc = _batch_detection_losses(logits, offsets, matches)
        total = l_conf + l_loc
    backward(total, tape)
    optimizer.step()
    return LossReport(l_conf=l_conf.item(), l_loc=l_loc.item(), step=step, phase=phase)


def evaluate_detector(net, head: SsdHead, dataset: Dataset, split: str,
                      anchors: AnchorSet, cfg: ExperimentConfig) -> float:
    """Validation mAP of a feature net + head on a dataset split."""
    d = cfg.distill
    ids = dataset.split_ids(split)
    preds: list[BoxList] = []
    gts: list[BoxList] = []
    n_batches = math.ceil(len(ids) / d.batch_size)
    for b in range(n_batches):
        images, gt = load_batch(dataset, split, b, d.batch_size)
        feats = net.forward(Tensor(images))
        logits, offsets = head.forward(feats)
        preds.extend(detect(logits.data, offsets.data, anchors, d.num_classes,
                            d.score_thresh, d.nms_iou, d.top_k))
        gts.extend(gt)
    _, mean_ap = evaluate_map(preds, gts, d.num_classes)
    return mean_ap


class _RunDir:
    """Run directory bookkeeping: config echo, incremental metrics, marker file."""

    def __init__(self, path, cfg: ExperimentConfig):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.marker = self.path / "RUNNING"
        self.marker.write_text("run in progress\n")
        with open(self.path / "config.json", "w", encoding="utf-8") as fh:
            json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        self._metrics = open(self.path / "metrics.csv", "w", encoding="utf-8")
        self._metrics.write(",".join(METRICS_COLUMNS) + "\n")
        self._timing = open(self.path / "timing.csv", "w", encoding="utf-8")
        self._timing.write("phase,epoch,wall_seconds\n")

    def metrics_row(self, phase: str, epoch: int, means: dict, val_map: float) -> None:
        row = [phase, str(epoch)]
        for col in METRICS_COLUMNS[2:-1]:
            row.append(f"{means.get(col, 0.0):.6f}")
        row.append(f"{val_map:.6f}")
        self._metrics.write(",".join(row) + "\n")
        self._metrics.flush()

    def timing_row(self, phase: str, epoch: int, seconds: float) -> None:
        self._timing.write(f"{phase},{epoch},{seconds:.3f}\n")
        self._timing.flush()

    def finish(self, summary: dict) -> None:
        self._metrics.close()
        self._timing.close()
        with open(self.path / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        self.marker.unlink(missing_ok=True)

    def fail(self, exc: Exception) -> None:
        self._metrics.close()
        self._timing.close()
        (self.path / "error.txt").write_text(f"{type(exc).__name__}: {exc}\n")


def _mean_reports(reports: list[LossReport]) -> dict:
    if not reports:
        return {}
    keys = reports[0].values().keys()
    return {k: float(np.mean([r.values()[k] for r in reports])) for k in keys}


def _check_finite(report: LossReport, run: _RunDir, epoch: int, batch_index: int) -> None:
    if report.finite():
        return
    dump = {"phase": report.phase, "epoch": epoch, "step": report.step,
            "batch_index": batch_index, "losses": report.values()}
    with open(run.path / "diverged.json", "w", encoding="utf-8") as fh:
        json.dump(dump, fh, indent=2)
    raise TrainingDiverged(report.phase, epoch, report.step, batch_index, report.values())


def _num_batches(dataset: Dataset, split: str, batch_size: int) -> int:
    return math.ceil(len(dataset.split_ids(split)) / batch_size)


def _maybe_checkpoint(params: ParamSet, run: _RunDir, cfg: ExperimentConfig,
                      epoch: int, total_epochs: int) -> None:
    if cfg.distill.checkpoint_every and (epoch % cfg.distill.checkpoint_every == 0
                                         or epoch == total_epochs):
        save_checkpoint(params, run.path / f"ckpt_epoch{epoch:03d}.ckpt",
                        config_hash(cfg))


def pretrain_teacher(cfg: ExperimentConfig, dataset: Dataset, run_dir,
                     step_hook: Optional[Callable] = None) -> dict:
    """Train teacher backbone + head with detection losses; returns the summary.

    The resulting checkpoint supplies both the frozen teacher and the head
    initialization used by distillation.
    """
    d = cfg.distill
    run = _RunDir(run_dir, cfg)
    try:
        teacher, params = build_teacher(cfg.teacher, cfg.seed)
        head, head_params = build_head(cfg.teacher, cfg.anchors, d.num_classes, cfg.seed)
        params.update(head_params)
        params.set_frozen(set())
        anchors = generate_anchors(cfg.anchors)
        opt = Adam(params, d.adam_lr, d.adam_beta1, d.adam_beta2, d.adam_eps)

        n_batches = _num_batches(dataset, "train", d.batch_size)
        best = -1.0
        step = 0
        final_map = 0.0
        for epoch in range(1, d.teacher_epochs + 1):
            t0 = time.perf_counter()
            order = epoch_order(len(dataset.split_ids("train")), cfg.seed, epoch)
            reports = []
            for b in range(n_batches):
                images, gt = load_batch(dataset, "train", b, d.batch_size, order)
                step += 1
                report = detection_step(teacher, head, params, anchors, images, gt,
                                        opt, d.pos_iou, d.variances, d.neg_pos_ratio,
                                        step, "teacher")
                _check_finite(report, run, epoch, b)
                reports.append(report)
                if step_hook:
                    step_hook("teacher", step, params, report)
            final_map = evaluate_detector(teacher, head, dataset, "val", anchors, cfg)
            run.metrics_row("teacher", epoch, _mean_reports(reports), final_map)
            run.timing_row("teacher", epoch, time.perf_counter() - t0)
            if final_map > best:
                best = final_map
                save_checkpoint(params, run.path / "ckpt_best.ckpt", config_hash(cfg))
            _maybe_checkpoint(params, run, cfg, epoch, d.teacher_epochs)

        save_checkpoint(params, run.path / "ckpt_final.ckpt", config_hash(cfg))
        summary = {"kind": "teacher", "seed": cfg.seed, "epochs": d.teacher_epochs,
                   "val_map_final": final_map, "val_map_best": best,
                   "update_steps": step}
        run.finish(summary)
        return summary
    except Exception as exc:
        run.fail(exc)
        raise


def train_baseline(cfg: ExperimentConfig, dataset: Dataset, run_dir, seed: int,
                   teacher_map: Optional[float] = None) -> dict:
    """Student trained with detection losses only, on the distilled budget.

    Runs stage1_epochs under Adam then stage2_epochs under SGD so the update
    count and optimizer schedule match the distilled student exactly; only
    the adversarial term and head initialization differ.
    """
    d = cfg.distill
    run = _RunDir(run_dir, cfg)
    try:
        student, params = build_student(cfg.student, cfg.teacher, seed)
        head, head_params = build_head(cfg.teacher, cfg.anchors, d.num_classes, seed)
        params.update(head_params)
        params.set_frozen(set())
        anchors = generate_anchors(cfg.anchors)
        adam = Adam(params, d.adam_lr, d.adam_beta1, d.adam_beta2, d.adam_eps)
        sgd = SGD(params, d.sgd_lr, d.sgd_momentum, d.sgd_weight_decay)

        n_batches = _num_batches(dataset, "train", d.batch_size)
        total_epochs = d.stage1_epochs + d.stage2_epochs
        best = -1.0
        step = 0
        final_map = 0.0
        for epoch in range(1, total_epochs + 1):
            t0 = time.perf_counter()
            opt = adam if epoch <= d.stage1_epochs else sgd
            order = epoch_order(len(dataset.split_ids("train")), seed, epoch)
            reports = []
            for b in range(n_batches):
                images, gt = load_batch(dataset, "train", b, d.batch_size, order)
                step += 1
                report = detection_step(student, head, params, anchors, images, gt,
                                        opt, d.pos_iou, d.variances, d.neg_pos_ratio,
                                        step, "baseline")
                _check_finite(report, run, epoch, b)
                reports.append(report)
            final_map = evaluate_detector(student, head, dataset, "val", anchors, cfg)
            run.metrics_row("baseline", epoch, _mean_reports(reports), final_map)
            run.timing_row("baseline", epoch, time.perf_counter() - t0)
            if final_map > best:
                best = final_map
                save_checkpoint(params, run.path / "ckpt_best.ckpt", config_hash(cfg))
            _maybe_checkpoint(params, run, cfg, epoch, total_epochs)

        save_checkpoint(params, run.path / "ckpt_final.ckpt", config_hash(cfg))
        summary = {"kind": "baseline", "seed": seed, "epochs": total_epochs,
                   "val_map_final": final_map, "val_map_best": best,
                   "update_steps": step, "teacher_map": teacher_map}
        run.finish(summary)
        return summary
    except Exception as exc:
        run.fail(exc)
        raise


def build_distill_models(cfg: ExperimentConfig, seed: int, teacher_ckpt) -> DistillModels:
    """Assemble teacher (from checkpoint), student, head (teacher-initialized),
    and critics into one parameter registry."""
    d = cfg.distill
    teacher, params = build_teacher(cfg.teacher, cfg.seed)
    head, head_params = build_head(cfg.teacher, cfg.anchors, d.num_classes, seed)
    params.update(head_params)
    loaded, _ = load_checkpoint(teacher_ckpt)
    for name, tensor in params.items():
        if name not in loaded:
            raise FreezeViolationError(f"teacher checkpoint is missing {name}")
        tensor.data[...] = loaded[name].data
    student, student_params = build_student(cfg.student, cfg.teacher, seed)
    params.update(student_params)
    dnet, dnet_params = build_dnet(cfg.teacher, seed, width=d.critic_width)
    params.update(dnet_params)
    anchors = generate_anchors(cfg.anchors)
    return DistillModels(teacher, student, head, dnet, params, anchors)


def run_stage1(cfg: ExperimentConfig, dataset: Dataset, models: DistillModels,
               run: _RunDir, seed: int, step_hook: Optional[Callable] = None) -> dict:
    """Adversarial stage: n_critic critic steps then one generator step per batch."""
    d = cfg.distill
    critic_opt = Adam(models.params, d.adam_lr, d.adam_beta1, d.adam_beta2, d.adam_eps,
                      groups={"dnet"})
    gen_opt = Adam(models.params, d.adam_lr, d.adam_beta1, d.adam_beta2, d.adam_eps,
                   groups={"student", "head"})
    n_batches = _num_batches(dataset, "train", d.batch_size)
    gap_medians = []
    best = -1.0
    critic_steps = 0
    generator_steps = 0
    final_map = 0.0
    for epoch in range(1, d.stage1_epochs + 1):
        t0 = time.perf_counter()
        order = epoch_order(len(dataset.split_ids("train")), seed, epoch)
        reports = []
        gaps = []
        for b in range(n_batches):
            images, gt = load_batch(dataset, "train", b, d.batch_size, order)
            models.params.set_frozen(FREEZE_PLANS["critic"])
            for _ in range(d.n_critic):
                critic_steps += 1
                report = critic_step(models, images, critic_opt, d.clip, critic_steps)
                _check_finite(report, run, epoch, b)
                reports.append(report)
                gaps.append(abs(report.l_dt - report.l_ds))
                if step_hook:
                    step_hook("critic", critic_steps, models.params, report)
            models.params.set_frozen(FREEZE_PLANS["generator"])
            generator_steps += 1
            report = generator_step(models, images, gt, gen_opt, d.pos_iou,
                                    d.variances, d.neg_pos_ratio, generator_steps)
            _check_finite(report, run, epoch, b)
            reports.append(report)
            if step_hook:
                step_hook("generator", generator_steps, models.params, report)
        gap_medians.append(float(np.median(gaps)))
        final_map = evaluate_detector(models.student, models.head, dataset, "val",
                                      models.anchors, cfg)
        run.metrics_row("stage1", epoch, _mean_reports(reports), final_map)
        run.timing_row("stage1", epoch, time.perf_counter() - t0)
        if final_map > best:
            best = final_map
            save_checkpoint(models.params, run.path / "ckpt_best.ckpt", config_hash(cfg))
        _maybe_checkpoint(models.params, run, cfg, epoch, d.stage1_epochs)
    return {"adv_gap_median_by_epoch": gap_medians, "critic_steps": critic_steps,
            "generator_steps": generator_steps, "stage1_val_map": final_map,
            "best": best}


def run_stage2(cfg: ExperimentConfig, dataset: Dataset, models: DistillModels,
               run: _RunDir, seed: int, best: float,
               step_hook: Optional[Callable] = None) -> dict:
    """Fine-tune stage: plain detection training of student + head under SGD."""
    d = cfg.distill
    models.params.set_frozen(FREEZE_PLANS["stage2"])
    opt = SGD(models.params, d.sgd_lr, d.sgd_momentum, d.sgd_weight_decay,
              groups={"student", "head"})
    n_batches = _num_batches(dataset, "train", d.batch_size)
    step = 0
    final_map = 0.0
    for epoch in range(1, d.stage2_epochs + 1):
        t0 = time.perf_counter()
        order = epoch_order(len(dataset.split_ids("train")), seed, 10_000 + epoch)
        reports = []
        for b in range(n_batches):
            images, gt = load_batch(dataset, "train", b, d.batch_size, order)
            step += 1
            report = detection_step(models.student, models.head, models.params,
                                    models.anchors, images, gt, opt, d.pos_iou,
                                    d.variances, d.neg_pos_ratio, step, "stage2")
            _check_finite(report, run, epoch, b)
            reports.append(report)
            if step_hook:
                step_hook("stage2", step, models.params, report)
        final_map = evaluate_detector(models.student, models.head, dataset, "val",
                                      models.anchors, cfg)
        run.metrics_row("stage2", epoch, _mean_reports(reports), final_map)
        run.timing_row("stage2", epoch, time.perf_counter() - t0)
        if final_map > best:
            best = final_map
            save_checkpoint(models.params, run.path / "ckpt_best.ckpt", config_hash(cfg))
        erange = d.stage2_epochs
        _maybe_checkpoint(models.params, run, cfg, epoch, erange)
    return {"stage2_steps": step, "val_map_final": final_map, "best": best}


def run_distill(cfg: ExperimentConfig, dataset: Dataset, run_dir, seed: int,
                teacher_ckpt, teacher_map: Optional[float] = None,
                step_hook: Optional[Callable] = None) -> dict:
    """Full distillation for one seed: stage 1 then stage 2."""
    run = _RunDir(run_dir, cfg)
    try:
        models = build_distill_models(cfg, seed, teacher_ckpt)
        teacher_sum_before = models.params.checksum("teacher")
        s1 = run_stage1(cfg, dataset, models, run, seed, step_hook)
        s2 = run_stage2(cfg, dataset, models, run, seed, s1["best"], step_hook)
        if models.params.checksum("teacher") != teacher_sum_before:
            raise FreezeViolationError("teacher parameters changed during distillation")
        save_checkpoint(models.params, run.path / "ckpt_final.ckpt", config_hash(cfg))
        summary = {"kind": "distill", "seed": seed,
                   "epochs": cfg.distill.stage1_epochs + cfg.distill.stage2_epochs,
                   "val_map_final": s2["val_map_final"], "val_map_best": s2["best"],
                   "val_map_stage1": s1["stage1_val_map"],
                   "adv_gap_median_by_epoch": s1["adv_gap_median_by_epoch"],
                   "update_steps": s1["generator_steps"] + s2["stage2_steps"],
                   "critic_steps": s1["critic_steps"], "teacher_map": teacher_map}
        run.finish(summary)
        return summary
    except Exception as exc:
        run.fail(exc)
        raise


def format_map(value: float) -> str:
    """mAP in percentage points, one decimal (e.g. 0.776 -> '77.6')."""
    return f"{value * 100:.1f}"


def format_delta(value: float) -> str:
    """Signed percentage-point delta, one decimal (e.g. '+2.2')."""
    return f"{value * 100:+.1f}"


def run_experiment(cfg: ExperimentConfig, dataset: Dataset, out_dir) -> dict:
    """Teacher once, then per seed a baseline and a distilled student.

    Returns the comparison report: one row per seed plus a median row, with
    deltas in percentage points.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    teacher_dir = out_dir / "teacher"
    if (teacher_dir / "summary.json").exists():
        with open(teacher_dir / "summary.json", encoding="utf-8") as fh:
            teacher_summary = json.load(fh)
    else:
        teacher_summary = pretrain_teacher(cfg, dataset, teacher_dir)
    teacher_map = teacher_summary["val_map_final"]
    teacher_ckpt = teacher_dir / "ckpt_final.ckpt"

    rows = []
    for seed in cfg.seeds:
        baseline = train_baseline(cfg, dataset, out_dir / f"baseline_seed{seed}",
                                  seed, teacher_map)
        distilled = run_distill(cfg, dataset, out_dir / f"distill_seed{seed}",
                                seed, teacher_ckpt, teacher_map)
        rows.append({"seed": seed, "teacher_map": teacher_map,
                     "baseline_map": baseline["val_map_final"],
                     "distill_map": distilled["val_map_final"],
                     "delta": distilled["val_map_final"] - baseline["val_map_final"]})

    median_row = {"seed": "median", "teacher_map": teacher_map,
                  "baseline_map": float(np.median([r["baseline_map"] for r in rows])),
                  "distill_map": float(np.median([r["distill_map"] for r in rows]))}
    median_row["delta"] = median_row["distill_map"] - median_row["baseline_map"]

    report = {"rows": rows, "median": median_row}
    _write_report(out_dir, report)
    return report


def _write_report(out_dir: Path, report: dict) -> None:
    with open(out_dir / "report.csv", "w", encoding="utf-8") as fh:
        fh.write("seed,teacher_mAP,baseline_mAP,distill_mAP,delta\n")
        for row in report["rows"] + [report["median"]]:
            fh.write(f"{row['seed']},{format_map(row['teacher_map'])},"
                     f"{format_map(row['baseline_map'])},{format_map(row['distill_map'])},"
                     f"{format_delta(row['delta'])}\n")
    lines = [f"{'seed':>8}  {'teacher':>8}  {'baseline':>9}  {'distilled':>9}  {'delta':>6}"]
    for row in report["rows"] + [report["median"]]:
        lines.append(f"{str(row['seed']):>8}  {format_map(row['teacher_map']):>8}  "
                     f"{format_map(row['baseline_map']):>9}  "
                     f"{format_map(row['distill_map']):>9}  {format_delta(row['delta']):>6}")
    text = "\n".join(lines) + "\n"
    (out_dir / "report.txt").write_text(text)
    log.info("comparison report:\n%s", text)

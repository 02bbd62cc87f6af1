"""Synthetic shapes detection dataset: generation, storage, seeded loading.

Each image is a noisy gray background with 1-3 anti-aliased filled shapes
(circle, square, triangle). Layout: ``images/NNNNNN.png``,
``annotations.jsonl`` (one record per image), ``manifest.json`` (config
echo, config hash, split index lists). Every sample is rendered from its
own RNG stream keyed by (seed, sample index), so parallel and serial
generation produce identical bytes.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .boxes import BoxList, iou
from .util import canonical_hash, worker_count

__all__ = [
    "CLASS_NAMES",
    "NUM_CLASSES",
    "ShapesConfig",
    "Sample",
    "Dataset",
    "render_sample",
    "generate_dataset",
    "load_dataset",
    "epoch_order",
    "load_batch",
]

log = logging.getLogger(__name__)

CLASS_NAMES = ("circle", "square", "triangle")
NUM_CLASSES = len(CLASS_NAMES)

_SUPERSAMPLE = 4
_MAX_PLACEMENT_TRIES = 100
_MAX_OVERLAP_IOU = 0.3


@dataclass(frozen=True)
class ShapesConfig:
    image_size: int = 64
    min_objects: int = 1
    max_objects: int = 3
    min_scale: float = 0.2
    max_scale: float = 0.5
    noise: float = 0.05
    size: int = 1000
    train_fraction: float = 0.8
    seed: int = 7
    hflip: bool = False

    def validate(self) -> None:
        if self.image_size < 8:
            raise ValueError("image_size must be >= 8")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ValueError("need 1 <= min_objects <= max_objects")
        if not 0 < self.min_scale <= self.max_scale <= 1:
            raise ValueError("need 0 < min_scale <= max_scale <= 1")
        if self.size < 2:
            raise ValueError("dataset size must be >= 2")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


@dataclass
class Sample:
    image: np.ndarray          # (3, H, W) float32 in [0, 1]
    boxes: BoxList


def _shape_alpha(label: int, box: np.ndarray, grid: int) -> np.ndarray:
    """Coverage mask for one shape on the supersampled grid, box-averaged."""
    ss = grid * _SUPERSAMPLE
    coords = (np.arange(ss) + 0.5) / ss
    gx, gy = np.meshgrid(coords, coords)        # gy rows = y, gx cols = x
    xmin, ymin, xmax, ymax = box
    cx, cy = (xmin + xmax) / 2, (ymin + ymax) / 2
    w, h = xmax - xmin, ymax - ymin
    if label == 0:                               # circle (inscribed in a square box)
        r = w / 2
        mask = (gx - cx) ** 2 + (gy - cy) ** 2 <= r * r
    elif label == 1:                             # axis-aligned square
        mask = (np.abs(gx - cx) <= w / 2) & (np.abs(gy - cy) <= h / 2)
    else:                                        # isosceles triangle, apex up
        inside_y = (gy >= ymin) & (gy <= ymax)
        half_width = (w / 2) * (gy - ymin) / h
        mask = inside_y & (np.abs(gx - cx) <= half_width)
    return mask.reshape(grid, _SUPERSAMPLE, grid, _SUPERSAMPLE).mean(axis=(1, 3))


def render_sample(rng: np.random.Generator, config: ShapesConfig) -> Sample:
    """Render one image with its ground-truth boxes.

    Draw order per object is fixed (label, size, aspect, placement tries,
    color), so a sample is a pure function of its RNG stream.
    """
    size = config.image_size
    img = 0.5 + config.noise * rng.uniform(-1.0, 1.0, size=(size, size, 3))
    img = np.clip(img, 0.0, 1.0)

    n_objects = int(rng.integers(config.min_objects, config.max_objects + 1))
    placed_boxes: list[np.ndarray] = []
    labels: list[int] = []
    for _ in range(n_objects):
        label = int(rng.integers(0, NUM_CLASSES))
        box = None
        for _ in range(_MAX_PLACEMENT_TRIES):
            s = rng.uniform(config.min_scale, config.max_scale)
            if label == 2:
                aspect = rng.uniform(0.75, 1.3333)
                w = float(np.clip(s * aspect, config.min_scale, config.max_scale))
            else:
                w = s
            h = s
            cx = rng.uniform(w / 2, 1 - w / 2)
            cy = rng.uniform(h / 2, 1 - h / 2)
            cand = np.array([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2],
                            dtype=np.float32)
            if all(iou(cand, other) <= _MAX_OVERLAP_IOU for other in placed_boxes):
                box = cand
                break
        if box is None:
            log.warning("skipping object: no non-overlapping placement in %d tries",
                        _MAX_PLACEMENT_TRIES)
            continue
        signs = rng.integers(0, 2, size=3) * 2 - 1
        offsets = rng.uniform(0.15, 0.5, size=3)
        color = 0.5 + signs * offsets
        alpha = _shape_alpha(label, box, size)[:, :, None]
        img = img * (1 - alpha) + color[None, None, :] * alpha
        placed_boxes.append(box)
        labels.append(label)

    quantized = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    image = (quantized.astype(np.float32) / 255.0).transpose(2, 0, 1)
    if placed_boxes:
        boxes = BoxList(np.stack(placed_boxes), np.asarray(labels, dtype=np.int64))
    else:
        boxes = BoxList.empty()
    return Sample(image, boxes)


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 3_000_000 + index])


def _splits(config: ShapesConfig) -> dict[str, list[int]]:
    rng = np.random.default_rng([config.seed, 1_000_001])
    perm = rng.permutation(config.size)
    n_train = int(round(config.train_fraction * config.size))
    return {"train": sorted(int(i) for i in perm[:n_train]),
            "val": sorted(int(i) for i in perm[n_train:])}


def generate_dataset(config: ShapesConfig, out_dir, force: bool = False) -> Path:
    """Render and store the dataset; returns the dataset directory."""
    config.validate()
    out_dir = Path(out_dir)
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists() and not force:
        raise FileExistsError(f"{out_dir} already holds a dataset; pass force to overwrite")
    (out_dir / "images").mkdir(parents=True, exist_ok=True)

    def render(i: int) -> Sample:
        return render_sample(_sample_rng(config.seed, i), config)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        samples = list(pool.map(render, range(config.size)))

    with open(out_dir / "annotations.jsonl", "w", encoding="utf-8") as ann:
        for i, sample in enumerate(samples):
            image_id = f"{i:06d}"
            u8 = np.round(sample.image * 255).astype(np.uint8).transpose(1, 2, 0)
            Image.fromarray(u8, mode="RGB").save(out_dir / "images" / f"{image_id}.png")
            record = {
                "id": image_id,
                "boxes": [[float(v) for v in box] for box in sample.boxes.boxes],
                "labels": [int(v) for v in sample.boxes.labels],
            }
            ann.write(json.dumps(record) + "\n")

    cfg_dict = asdict(config)
    manifest = {
        "config": cfg_dict,
        "config_hash": canonical_hash(cfg_dict),
        "class_names": list(CLASS_NAMES),
        "splits": _splits(config),
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return out_dir


class Dataset:
    """Loaded dataset with in-memory image cache."""

    def __init__(self, root: Path, manifest: dict, annotations: dict[str, dict]):
        self.root = root
        self.manifest = manifest
        self.config = ShapesConfig(**manifest["config"])
        self._annotations = annotations
        self._cache: dict[str, np.ndarray] = {}

    def split_ids(self, split: str) -> list[int]:
        if split not in self.manifest["splits"]:
            raise KeyError(f"unknown split {split!r}")
        return self.manifest["splits"][split]

    def image(self, index: int) -> np.ndarray:
        image_id = f"{index:06d}"
        cached = self._cache.get(image_id)
        if cached is None:
            path = self.root / "images" / f"{image_id}.png"
            try:
                with Image.open(path) as im:
                    u8 = np.asarray(im.convert("RGB"))
            except Exception as exc:
                raise IOError(f"corrupt or missing sample image: {path}") from exc
            cached = (u8.astype(np.float32) / 255.0).transpose(2, 0, 1)
            self._cache[image_id] = cached
        return cached

    def boxes(self, index: int) -> BoxList:
        image_id = f"{index:06d}"
        rec = self._annotations.get(image_id)
        if rec is None:
            raise IOError(f"missing annotation record for image {image_id}")
        if not rec["boxes"]:
            return BoxList.empty()
        return BoxList(np.asarray(rec["boxes"], dtype=np.float32),
                       np.asarray(rec["labels"], dtype=np.int64))

    def sample(self, index: int) -> Sample:
        return Sample(self.image(index), self.boxes(index))


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {root}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    annotations = {}
    with open(root / "annotations.jsonl", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IOError(f"annotations.jsonl line {line_no} is corrupt") from exc
            annotations[rec["id"]] = rec
    return Dataset(root, manifest, annotations)


def epoch_order(n: int, run_seed: int, epoch: int) -> np.ndarray:
    """Deterministic per-epoch shuffle keyed by (run seed, epoch)."""
    rng = np.random.default_rng([run_seed, 2_000_000 + epoch])
    return rng.permutation(n)


def load_batch(dataset: Dataset, split: str, batch_index: int, batch_size: int,
               order: Optional[np.ndarray] = None) -> tuple[np.ndarray, list[BoxList]]:
    """One batch of stacked images plus per-image ground truth.

    ``order`` permutes the split (from :func:`epoch_order`); without it the
    split's natural order is used. The final batch may be short.
    """
    ids = dataset.split_ids(split)
    if order is not None:
        ids = [ids[i] for i in order]
    start = batch_index * batch_size
    if start >= len(ids) or batch_index < 0:
        raise IndexError(f"batch {batch_index} out of range for split of {len(ids)}")
    chunk = ids[start:start + batch_size]
    images = np.stack([dataset.image(i) for i in chunk])
    return images, [dataset.boxes(i) for i in chunk]

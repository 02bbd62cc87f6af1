"""Network constructors and forwards: backbones, channel adapters, SSD head,
and the per-scale critic bank.

Downsampling stages use 4x4 stride-2 pad-1 convolutions (exact halving of
even sizes); stride-1 stages use 3x3 pad-1. All weights are Kaiming-uniform
fan-in initialized from the run seed; biases start at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .anchors import AnchorConfig, AnchorSet
from .boxes import BoxList, decode_boxes
from .optim import ParamSet
from .tensor import Tensor, ShapeError, concat, conv2d, leaky_relu, linear, permute, relu, reshape

__all__ = [
    "BackboneSpec",
    "Backbone",
    "StudentNet",
    "Critic",
    "DNet",
    "SsdHead",
    "build_teacher",
    "build_student",
    "build_head",
    "build_dnet",
    "forward_pyramid",
    "detect",
    "DEFAULT_TEACHER",
    "DEFAULT_STUDENT",
]

# Seed stream tags, one per component.
_TAG_TEACHER, _TAG_STUDENT, _TAG_DNET, _TAG_HEAD, _TAG_ADAPTER = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class BackboneSpec:
    """Stage layout of a backbone and which stages feed the pyramid.

    Each stage opens with one strided conv; ``convs_per_stage - 1`` extra
    3x3 convs refine at the same resolution.
    """

    channels: tuple[int, ...] = (32, 64, 64, 128, 128)
    strides: tuple[int, ...] = (2, 2, 2, 2, 2)
    emit: tuple[int, ...] = (2, 3, 4)
    image_size: int = 64
    convs_per_stage: int = 2

    @property
    def num_scales(self) -> int:
        return len(self.emit)

    def stage_sizes(self) -> list[int]:
        sizes = []
        size = self.image_size
        for stride in self.strides:
            if stride == 2:
                if size % 2 != 0:
                    raise ValueError(f"backbone: cannot halve odd size {size}")
                size //= 2
            elif stride != 1:
                raise ValueError(f"backbone: unsupported stride {stride}")
            sizes.append(size)
        return sizes

    def emitted_sizes(self) -> list[int]:
        sizes = self.stage_sizes()
        return [sizes[i] for i in self.emit]

    def emitted_channels(self) -> list[int]:
        return [self.channels[i] for i in self.emit]

    def validate(self) -> None:
        if len(self.channels) != len(self.strides):
            raise ValueError("backbone: channels and strides must have the same length")
        if not self.emit:
            raise ValueError("backbone: must emit at least one scale")
        if any(not 0 <= i < len(self.channels) for i in self.emit):
            raise ValueError("backbone: emit indices out of range")
        if list(self.emit) != sorted(set(self.emit)):
            raise ValueError("backbone: emit indices must be strictly increasing")
        if self.convs_per_stage < 1:
            raise ValueError("backbone: convs_per_stage must be >= 1")
        sizes = self.emitted_sizes()
        if any(b >= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"backbone: emitted sizes must strictly decrease, got {sizes}")


def _rng_for(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag])


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def _add_conv(params: ParamSet, group: str, name: str, rng, out_c: int, in_c: int,
              k: int) -> tuple[Tensor, Tensor]:
    w = params.add(f"{name}/weight",
                   Tensor(_kaiming_uniform(rng, (out_c, in_c, k, k), in_c * k * k)), group)
    b = params.add(f"{name}/bias", Tensor(np.zeros(out_c, dtype=np.float32)), group)
    return w, b


class Backbone:
    """Plain conv stack; emits the configured stages as a feature pyramid."""

    def __init__(self, spec: BackboneSpec, params: ParamSet, group: str, prefix: str,
                 rng: np.random.Generator):
        spec.validate()
        self.spec = spec
        self.stages: list[list[tuple[Tensor, Tensor, int]]] = []  # per stage: (w, b, stride)
        in_c = 3
        for i, (out_c, stride) in enumerate(zip(spec.channels, spec.strides)):
            convs = []
            k = 4 if stride == 2 else 3
            w, b = _add_conv(params, group, f"{prefix}/stage{i}/conv0", rng, out_c, in_c, k)
            convs.append((w, b, stride))
            for j in range(1, spec.convs_per_stage):
                w, b = _add_conv(params, group, f"{prefix}/stage{i}/conv{j}", rng,
                                 out_c, out_c, 3)
                convs.append((w, b, 1))
            self.stages.append(convs)
            in_c = out_c

    def forward(self, x: Tensor) -> list[Tensor]:
        expected = self.spec.image_size
        if x.data.ndim != 4 or x.shape[1] != 3 or x.shape[2] != expected or x.shape[3] != expected:
            raise ShapeError(f"backbone expects (N, 3, {expected}, {expected}), got {x.shape}")
        pyramid = []
        out = x
        for i, convs in enumerate(self.stages):
            for w, b, stride in convs:
                out = relu(conv2d(out, w, b, stride=stride, padding=1))
            if i in self.spec.emit:
                pyramid.append(out)
        return pyramid


class StudentNet:
    """Student backbone plus per-scale 1x1 adapters onto the teacher's channels.

    Adapters keep one shared head and critic bank valid for both nets even
    when the student's emitted channel counts differ from the teacher's.
    """

    def __init__(self, spec: BackboneSpec, teacher_spec: BackboneSpec, params: ParamSet,
                 seed: int):
        teacher_spec.validate()
        if spec.emitted_sizes() != teacher_spec.emitted_sizes():
            raise ValueError(
                f"student emits sizes {spec.emitted_sizes()} but teacher emits "
                f"{teacher_spec.emitted_sizes()}")
        self.spec = spec
        self.teacher_spec = teacher_spec
        self.backbone = Backbone(spec, params, "student", "student", _rng_for(seed, _TAG_STUDENT))
        rng = _rng_for(seed, _TAG_ADAPTER)
        self.adapters: list[tuple[Tensor, Tensor]] = []
        for k, (s_c, t_c) in enumerate(zip(spec.emitted_channels(),
                                           teacher_spec.emitted_channels())):
            w, b = _add_conv(params, "student", f"student/adapter{k}", rng, t_c, s_c, 1)
            self.adapters.append((w, b))

    def forward(self, x: Tensor) -> list[Tensor]:
        pyramid = self.backbone.forward(x)
        return [conv2d(feat, w, b, stride=1, padding=0)
                for feat, (w, b) in zip(pyramid, self.adapters)]


class Critic:
    """Stride-2 conv stack to 1x1 spatial, then a linear map to one score.

    No normalization layers; leaky-relu activations. Output is an unbounded
    score per sample, shape (N, 1).
    """

    def __init__(self, in_channels: int, in_size: int, params: ParamSet, name: str,
                 rng: np.random.Generator, width: int = 64, slope: float = 0.2):
        self.slope = slope
        self.in_size = in_size
        self.convs: list[tuple[Tensor, Tensor]] = []
        size = in_size
        c = in_channels
        depth = max(0, math.ceil(math.log2(in_size)))
        for i in range(depth):
            if size % 2 != 0:
                raise ValueError(f"critic: cannot halve odd feature size {size}")
            w, b = _add_conv(params, "dnet", f"{name}/conv{i}", rng, width, c, 4)
            self.convs.append((w, b))
            c = width
            size //= 2
        wf = params.add(f"{name}/out/weight",
                        Tensor(_kaiming_uniform(rng, (1, c), c)), "dnet")
        bf = params.add(f"{name}/out/bias", Tensor(np.zeros(1, dtype=np.float32)), "dnet")
        self.out = (wf, bf)
        self.flat_features = c

    def forward(self, feat: Tensor) -> Tensor:
        if feat.shape[2] != self.in_size or feat.shape[3] != self.in_size:
            raise ShapeError(f"critic expects {self.in_size}x{self.in_size} features, "
                             f"got {feat.shape}")
        out = feat
        for w, b in self.convs:
            out = leaky_relu(conv2d(out, w, b, stride=2, padding=1), self.slope)
        n = out.shape[0]
        flat = reshape(out, (n, self.flat_features))
        return linear(flat, *self.out)


class DNet:
    """One critic per pyramid scale."""

    def __init__(self, teacher_spec: BackboneSpec, params: ParamSet, seed: int,
                 width: int = 64):
        rng = _rng_for(seed, _TAG_DNET)
        self.critics = [
            Critic(c, s, params, f"dnet/scale{k}", rng, width=width)
            for k, (c, s) in enumerate(zip(teacher_spec.emitted_channels(),
                                           teacher_spec.emitted_sizes()))
        ]

    def __len__(self) -> int:
        return len(self.critics)

    def forward(self, pyramid: Sequence[Tensor]) -> list[Tensor]:
        if len(pyramid) != len(self.critics):
            raise ShapeError(f"D-Net has {len(self.critics)} critics but pyramid has "
                             f"{len(pyramid)} scales")
        return [critic.forward(feat) for critic, feat in zip(self.critics, pyramid)]


class SsdHead:
    """Per-scale 3x3 convs emitting class logits and box offsets.

    Outputs are flattened to (N, A, C+1) and (N, A, 4) in anchor order
    (scale, then row-major cells, then per-cell anchors).
    """

    def __init__(self, teacher_spec: BackboneSpec, anchor_cfg: AnchorConfig,
                 num_classes: int, params: ParamSet, seed: int):
        if list(anchor_cfg.grids) != teacher_spec.emitted_sizes():
            raise ValueError(
                f"anchor grids {list(anchor_cfg.grids)} do not match emitted sizes "
                f"{teacher_spec.emitted_sizes()}")
        self.num_classes = num_classes
        self.anchor_cfg = anchor_cfg
        rng = _rng_for(seed, _TAG_HEAD)
        self.layers: list[tuple[tuple[Tensor, Tensor], tuple[Tensor, Tensor], int]] = []
        for k, c in enumerate(teacher_spec.emitted_channels()):
            per_cell = anchor_cfg.anchors_per_cell(k)
            cls = _add_conv(params, "head", f"head/scale{k}/cls", rng,
                            per_cell * (num_classes + 1), c, 3)
            loc = _add_conv(params, "head", f"head/scale{k}/loc", rng,
                            per_cell * 4, c, 3)
            self.layers.append((cls, loc, per_cell))

    def forward(self, pyramid: Sequence[Tensor]) -> tuple[Tensor, Tensor]:
        if len(pyramid) != len(self.layers):
            raise ShapeError(f"head has {len(self.layers)} scales but pyramid has "
                             f"{len(pyramid)}")
        n = pyramid[0].shape[0]
        n_out = self.num_classes + 1
        logits_parts, offset_parts = [], []
        for feat, (cls, loc, per_cell) in zip(pyramid, self.layers):
            h, w = feat.shape[2], feat.shape[3]
            raw_cls = conv2d(feat, *cls, stride=1, padding=1)
            raw_loc = conv2d(feat, *loc, stride=1, padding=1)
            logits_parts.append(
                reshape(permute(raw_cls, (0, 2, 3, 1)), (n, h * w * per_cell, n_out)))
            offset_parts.append(
                reshape(permute(raw_loc, (0, 2, 3, 1)), (n, h * w * per_cell, 4)))
        return concat(logits_parts, axis=1), concat(offset_parts, axis=1)


def build_teacher(spec: BackboneSpec, seed: int) -> tuple[Backbone, ParamSet]:
    params = ParamSet()
    net = Backbone(spec, params, "teacher", "teacher", _rng_for(seed, _TAG_TEACHER))
    return net, params


def build_student(spec: BackboneSpec, teacher_spec: BackboneSpec,
                  seed: int) -> tuple[StudentNet, ParamSet]:
    params = ParamSet()
    net = StudentNet(spec, teacher_spec, params, seed)
    return net, params


def build_head(teacher_spec: BackboneSpec, anchor_cfg: AnchorConfig, num_classes: int,
               seed: int) -> tuple[SsdHead, ParamSet]:
    params = ParamSet()
    net = SsdHead(teacher_spec, anchor_cfg, num_classes, params, seed)
    return net, params


def build_dnet(teacher_spec: BackboneSpec, seed: int,
               width: int = 64) -> tuple[DNet, ParamSet]:
    params = ParamSet()
    net = DNet(teacher_spec, params, seed, width=width)
    return net, params


# Desk-scale defaults: 64x64 inputs, three emitted scales at 8x8/4x4/2x2
# carrying 64/128/128 (teacher) and 16/32/32 (student) channels.
DEFAULT_TEACHER = BackboneSpec(channels=(32, 64, 64, 128, 128))
DEFAULT_STUDENT = BackboneSpec(channels=(8, 16, 16, 32, 32))


def forward_pyramid(net, x: Tensor) -> list[Tensor]:
    """Run a teacher or student forward; returns the K-scale pyramid."""
    return net.forward(x)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def detect(logits: np.ndarray, offsets: np.ndarray, anchors: AnchorSet,
           num_classes: int, score_thresh: float = 0.05, nms_iou: float = 0.45,
           top_k: int = 100) -> list[BoxList]:
    """Decode head outputs into per-image detections.

    ``logits`` is (N, A, C+1), ``offsets`` (N, A, 4). Applies softmax
    scoring, offset decoding, score thresholding and per-class NMS.
    """
    from .boxes import nms as run_nms

    results = []
    probs = _softmax(logits)
    for i in range(logits.shape[0]):
        decoded = decode_boxes(offsets[i], anchors.boxes)
        np.clip(decoded, 0.0, 1.0, out=decoded)
        boxes, labels, scores = [], [], []
        for cls in range(num_classes):
            s = probs[i, :, cls + 1]
            sel = np.flatnonzero(s >= score_thresh)
            for a in sel:
                b = decoded[a]
                if b[2] - b[0] <= 0 or b[3] - b[1] <= 0:
                    continue
                boxes.append(b)
                labels.append(cls)
                scores.append(s[a])
        if not boxes:
            results.append(BoxList.empty())
            continue
        dets = BoxList(np.asarray(boxes), np.asarray(labels), np.asarray(scores))
        results.append(run_nms(dets, iou_thresh=nms_iou, top_k=top_k))
    return results

"""Named parameter registry with freezable groups, plus Adam and SGD."""

from __future__ import annotations

import hashlib
from typing import Iterable, Iterator, Optional

import numpy as np

from .tensor import Tensor

__all__ = ["ParamSet", "Adam", "SGD", "MissingGradError"]


class MissingGradError(RuntimeError):
    """An optimizer step found a trainable parameter without a gradient."""


class ParamSet:
    """Insertion-ordered mapping of parameter names to tensors.

    Every parameter belongs to exactly one group (e.g. ``teacher``,
    ``student``, ``dnet``, ``head``). Frozen groups are skipped entirely by
    the optimizers, so their data stays bit-identical across steps.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._group_of: dict[str, str] = {}
        self.frozen: set[str] = set()

    def add(self, name: str, tensor: Tensor, group: str) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        tensor.requires_grad = True
        self._params[name] = tensor
        self._group_of[name] = group
        return tensor

    def update(self, other: "ParamSet") -> None:
        """Absorb all parameters of ``other`` (names must not collide)."""
        for name, tensor in other._params.items():
            self.add(name, tensor, other._group_of[name])

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def group_of(self, name: str) -> str:
        return self._group_of[name]

    def groups(self) -> set[str]:
        return set(self._group_of.values())

    def items(self, group: Optional[str] = None) -> Iterator[tuple[str, Tensor]]:
        for name, tensor in self._params.items():
            if group is None or self._group_of[name] == group:
                yield name, tensor

    def tensors(self, group: Optional[str] = None) -> list[Tensor]:
        return [t for _, t in self.items(group)]

    def set_frozen(self, groups: Iterable[str]) -> None:
        self.frozen = set(groups)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def num_elements(self, group: Optional[str] = None) -> int:
        return sum(t.size for t in self.tensors(group))

    def checksum(self, group: Optional[str] = None) -> str:
        """SHA-256 over raw parameter bytes, in name order."""
        h = hashlib.sha256()
        for name, t in self.items(group):
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def clip_group(self, group: str, limit: float) -> None:
        """Clamp every entry of ``group`` to [-limit, +limit], in place."""
        for t in self.tensors(group):
            np.clip(t.data, -limit, limit, out=t.data)

    def max_abs(self, group: str) -> float:
        return max(float(np.max(np.abs(t.data))) for t in self.tensors(group))


class _Optimizer:
    """Shared freeze/missing-grad handling for concrete optimizers."""

    def __init__(self, params: ParamSet, groups: Optional[Iterable[str]] = None):
        self.params = params
        self.groups = set(groups) if groups is not None else None

    def _targets(self) -> Iterator[tuple[str, Tensor]]:
        for name, tensor in self.params.items():
            group = self.params.group_of(name)
            if group in self.params.frozen:
                continue
            if self.groups is not None and group not in self.groups:
                continue
            if tensor.grad is None:
                raise MissingGradError(f"parameter {name} has no gradient")
            yield name, tensor


class Adam(_Optimizer):
    """Adam with bias correction; moment state persists across steps."""

    def __init__(self, params: ParamSet, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 groups: Optional[Iterable[str]] = None):
        super().__init__(params, groups)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self._targets():
            g = p.grad
            m = self._m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
                self._m[name] = m
                self._v[name] = v
            else:
                v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)


class SGD(_Optimizer):
    """SGD with classical momentum and coupled weight decay.

    v <- momentum * v + grad + weight_decay * theta; theta <- theta - lr * v.
    """

    def __init__(self, params: ParamSet, lr: float, momentum: float = 0.0,
                 weight_decay: float = 0.0, groups: Optional[Iterable[str]] = None):
        super().__init__(params, groups)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity: dict[str, np.ndarray] = {}

    def step(self) -> None:
        for name, p in self._targets():
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            v = self._velocity.get(name)
            if v is None:
                v = np.zeros_like(p.data)
                self._velocity[name] = v
            v *= self.momentum
            v += g
            p.data -= (self.lr * v).astype(p.data.dtype)

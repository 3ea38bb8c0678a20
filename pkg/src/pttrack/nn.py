"""Trainable layers, Adam, gradient checking and binary checkpoints.

Parameters are float64 throughout. Initialization draws uniformly from
+-sqrt(6 / (fan_in + fan_out)) with zero biases, seeded per parameter name
so that two models sharing a module also share its exact initial weights.
"""

from __future__ import annotations

import struct
from typing import Callable, Iterable

import numpy as np

from .errors import NumericalError
from .rng import SplitMix64
from .tape import Tensor, backward, linear, relu

CHECKPOINT_MAGIC = b"PTTCKPT1"
CHECKPOINT_VERSION = 1


class Parameter(Tensor):
    """A named trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _uniform(stream: SplitMix64, shape: tuple[int, ...], limit: float) -> np.ndarray:
    flat = np.array([stream.next_uniform(-limit, limit) for _ in range(int(np.prod(shape)))])
    return flat.reshape(shape)


class LinearLayer:
    """Dense layer y = W x + b with W of shape (out, in)."""

    def __init__(self, weight: Parameter, bias: Parameter):
        if weight.data.ndim != 2 or bias.data.shape != (weight.data.shape[0],):
            raise ValueError("inconsistent linear layer shapes")
        self.weight = weight
        self.bias = bias

    @staticmethod
    def create(name: str, in_dim: int, out_dim: int, seed: int) -> "LinearLayer":
        stream = SplitMix64(seed).stream(name)
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        return LinearLayer(
            Parameter(f"{name}.weight", _uniform(stream, (out_dim, in_dim), limit)),
            Parameter(f"{name}.bias", np.zeros(out_dim)),
        )

    @property
    def in_dim(self) -> int:
        return self.weight.data.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.data.shape[0]

    def __call__(self, x) -> Tensor:
        return linear(x, self.weight, self.bias)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


class Mlp2:
    """Two linear layers with one ReLU in between."""

    def __init__(self, first: LinearLayer, second: LinearLayer):
        if first.out_dim != second.in_dim:
            raise ValueError("Mlp2 hidden widths disagree")
        self.first = first
        self.second = second

    @staticmethod
    def create(name: str, in_dim: int, hidden: int, out_dim: int, seed: int) -> "Mlp2":
        return Mlp2(
            LinearLayer.create(f"{name}.first", in_dim, hidden, seed),
            LinearLayer.create(f"{name}.second", hidden, out_dim, seed),
        )

    def __call__(self, x) -> Tensor:
        return self.second(relu(self.first(x)))

    def parameters(self) -> list[Parameter]:
        return self.first.parameters() + self.second.parameters()


class Adam:
    """Adam with bias correction and a single divide-by-``lr_drop_factor`` step.

    The learning-rate schedule follows :meth:`start_epoch`: from
    ``lr_drop_epoch`` onward the base rate is divided by ``lr_drop_factor``.
    """

    def __init__(
        self,
        params: Iterable[Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        lr_drop_epoch: int | None = None,
        lr_drop_factor: float = 5.0,
    ):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.base_lr = lr
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.lr_drop_epoch = lr_drop_epoch
        self.lr_drop_factor = lr_drop_factor
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def start_epoch(self, epoch: int) -> float:
        """Set and return the learning rate in effect for ``epoch`` (0-based)."""
        self.lr = self.base_lr
        if self.lr_drop_epoch is not None and epoch >= self.lr_drop_epoch:
            self.lr = self.base_lr / self.lr_drop_factor
        return self.lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NumericalError(f"non-finite gradient in parameter {p.name!r}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p in self.params:
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            with np.errstate(over="ignore", invalid="ignore"):  # caught below
                p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if not np.all(np.isfinite(p.data)):
                raise NumericalError(f"non-finite values in parameter {p.name!r} after update")


def fd_check(
    loss_fn: Callable[[], Tensor],
    params: Iterable[Parameter],
    step: float = 1e-5,
    max_entries_per_param: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative mismatch between analytic and central-difference gradients.

    ``loss_fn`` must rebuild its graph from the parameters' current values on
    every call. With ``max_entries_per_param`` set, a seeded subset of entries
    is probed per parameter instead of every entry. The denominator is floored
    at 1e-6 so entries whose true gradient is exactly zero compare as matching
    against finite-difference roundoff noise instead of dividing it up.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(loss_fn())
    analytic = {p.name: p.grad.copy() for p in params}

    stream = SplitMix64(seed)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries_per_param is None or n <= max_entries_per_param:
            entries = range(n)
        else:
            entries = sorted({stream.next_below(n) for _ in range(max_entries_per_param)})
        ana_flat = analytic[p.name].reshape(-1)
        for i in entries:
            saved = flat[i]
            flat[i] = saved + step
            plus = loss_fn().data.item()
            flat[i] = saved - step
            minus = loss_fn().data.item()
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * step)
            rel = abs(ana_flat[i] - numeric) / max(abs(ana_flat[i]), abs(numeric), 1e-6)
            worst = max(worst, rel)
    return worst


def save_params(fp, params: Iterable[Parameter]) -> None:
    """Serialize parameters to a binary stream.

    Layout (all integers little-endian uint32): magic ``PTTCKPT1``, version,
    parameter count; then per parameter, name length, UTF-8 name, rank, the
    dims, and the float64 little-endian payload. Round-trips bit-exactly.
    """
    params = list(params)
    fp.write(CHECKPOINT_MAGIC)
    fp.write(struct.pack("<II", CHECKPOINT_VERSION, len(params)))
    for p in params:
        name = p.name.encode("utf-8")
        fp.write(struct.pack("<I", len(name)))
        fp.write(name)
        fp.write(struct.pack("<I", p.data.ndim))
        fp.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        fp.write(p.data.astype("<f8", copy=False).tobytes())


def load_params(fp) -> dict[str, np.ndarray]:
    """Inverse of :func:`save_params`; returns name -> float64 array."""
    from .errors import DataError

    def read(n: int) -> bytes:
        buf = fp.read(n)
        if len(buf) != n:
            raise DataError("truncated checkpoint")
        return buf

    if read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise DataError("bad checkpoint magic")
    version, count = struct.unpack("<II", read(8))
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", read(4))
        name = read(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", read(4))
        dims = struct.unpack(f"<{rank}I", read(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        payload = read(8 * size)
        out[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    return out


def assign_params(params: Iterable[Parameter], values: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into parameters, checking names and shapes."""
    from .errors import DataError

    for p in params:
        if p.name not in values:
            raise DataError(f"checkpoint is missing parameter {p.name!r}")
        arr = values[p.name]
        if arr.shape != p.data.shape:
            raise DataError(
                f"checkpoint shape {arr.shape} != expected {p.data.shape} for {p.name!r}"
            )
        p.data[...] = arr

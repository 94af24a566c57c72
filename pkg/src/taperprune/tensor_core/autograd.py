"""Dense tensors and a per-minibatch reverse-mode tape.

Operations record themselves on the active :class:`Tape` when at least one
input requires a gradient.  ``Tape.backward`` walks the records in reverse
recording order (a valid reverse topological order) exactly once and then
clears the tape.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DTYPES = {"float64": np.float64, "float32": np.float32}


class UsageError(RuntimeError):
    """Raised when the tape is driven in an invalid order."""


class ShapeError(ValueError):
    """Raised when operand extents disagree."""

    def __init__(self, what: str, expected, got):
        super().__init__(f"{what}: expected {expected}, got {got}")
        self.what = what
        self.expected = expected
        self.got = got


class Tensor:
    """A dense row-major array with an optional gradient slot."""

    __slots__ = ("_data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.array(data, dtype=dtype if dtype is not None else None, copy=True)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self._data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def wrap(cls, arr: np.ndarray, requires_grad: bool = False, name: str | None = None) -> "Tensor":
        """Adopt ``arr`` without copying."""
        t = cls.__new__(cls)
        t._data = arr
        t.grad = None
        t.requires_grad = requires_grad
        t.name = name
        return t

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        value = np.asarray(value)
        if value.shape != self._data.shape:
            raise ShapeError(f"assignment to {self.name or 'tensor'}", self._data.shape, value.shape)
        self._data = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def dtype(self):
        return self._data.dtype

    @property
    def size(self) -> int:
        return self._data.size

    def numpy(self) -> np.ndarray:
        return self._data

    def item(self) -> float:
        return float(self._data.reshape(-1)[0]) if self._data.size == 1 else float("nan")

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # arithmetic sugar, used mainly by tests and the analytic examples
    def __add__(self, other):
        from . import functional as F

        return F.add(self, _as_tensor(other, self.dtype))

    __radd__ = __add__

    def __mul__(self, other):
        from . import functional as F

        return F.mul(self, _as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def sum(self):
        from . import functional as F

        return F.sum(self)


def _as_tensor(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


@dataclass
class TapeNode:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    # maps the output gradient to one gradient (or None) per input
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Records one forward pass; consumed by a single :meth:`backward`."""

    nodes: list[TapeNode] = field(default_factory=list)
    _produced: dict[int, int] = field(default_factory=dict)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward) -> Tensor:
        if any(t.requires_grad for t in inputs):
            output.requires_grad = True
            self._produced[id(output)] = len(self.nodes)
            self.nodes.append(TapeNode(op, tuple(inputs), output, backward))
        return output

    def backward(self, loss: Tensor) -> None:
        """Populate ``.grad`` of every tensor that led to ``loss``."""
        if not self.nodes:
            raise UsageError("backward() called before any forward pass was recorded")
        if id(loss) not in self._produced:
            raise UsageError("loss tensor was not produced on this tape")
        if loss.size != 1:
            raise UsageError(f"loss must be a scalar, got shape {loss.shape}")

        for node in self.nodes:
            for t in node.inputs:
                t.grad = None
            node.output.grad = None
        loss.grad = np.ones_like(loss.data)

        last = self._produced[id(loss)]
        for node in reversed(self.nodes[: last + 1]):
            g = node.output.grad
            if g is None:
                continue
            for t, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.array(gi, dtype=t.dtype, copy=True)
                else:
                    t.grad += gi
        self.clear()

    def clear(self) -> None:
        self.nodes.clear()
        self._produced.clear()

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)


_TAPES: list[Tape] = []


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def record(op: str, inputs: Sequence[Tensor], output: Tensor, backward) -> Tensor:
    """Record on the innermost active tape, if any."""
    tape = active_tape()
    if tape is not None:
        tape.record(op, inputs, output, backward)
    return output


@contextlib.contextmanager
def no_tape():
    """Temporarily disable recording (evaluation passes)."""
    saved = list(_TAPES)
    _TAPES.clear()
    try:
        yield
    finally:
        _TAPES.extend(saved)

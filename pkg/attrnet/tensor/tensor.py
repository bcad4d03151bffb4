"""Dense tensors and reverse-mode differentiation over the graph of ops that produced them."""
from __future__ import annotations

import abc
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from typing import ClassVar

import numpy as np
from loguru import logger

from attrnet.errors import ContractError, NumericError

_GRAD_ENABLED: ContextVar[bool] = ContextVar("attrnet_grad_enabled", default=True)
_DEFAULT_DTYPE: ContextVar[np.dtype] = ContextVar("attrnet_default_dtype", default=np.dtype(np.float32))


def grad_enabled() -> bool:
    """Return whether ops currently record themselves for backward."""
    return _GRAD_ENABLED.get()


def default_dtype() -> np.dtype:
    """Return the dtype new tensors are created with (32-bit unless inside `float64_mode`)."""
    return _DEFAULT_DTYPE.get()


@contextmanager
def no_grad() -> Iterator[None]:
    """Run forward passes without recording a compute graph."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


@contextmanager
def float64_mode() -> Iterator[None]:
    """Create tensors in 64-bit precision, for gradient checking."""
    token = _DEFAULT_DTYPE.set(np.dtype(np.float64))
    try:
        yield
    finally:
        _DEFAULT_DTYPE.reset(token)


class Tensor:
    """An n-dimensional real array with an optional gradient buffer.

    Tensors produced by an op while gradients are enabled remember that op in `node`, which is how
    `backward` finds its way back to the leaves.
    """

    __slots__ = ("data", "grad", "requires_grad", "node", "name")

    data: np.ndarray
    """The values, row-major."""
    grad: np.ndarray | None
    """Accumulated gradient, same shape as `data`, or None before any backward pass reaches this tensor."""
    requires_grad: bool
    node: Function | None
    """The op that produced this tensor, or None for leaves."""
    name: str | None

    def __init__(
        self,
        data: np.ndarray | float | list,
        *,
        requires_grad: bool = False,
        dtype: np.dtype | type | None = None,
        name: str | None = None,
    ) -> None:
        """Create a leaf tensor. Leaves which require grad own a private copy of `data`."""
        target_dtype = np.dtype(dtype) if dtype is not None else default_dtype()
        array = np.array(data, dtype=target_dtype) if requires_grad else np.asarray(data, dtype=target_dtype)
        if array.ndim > 0 and 0 in array.shape:
            raise ContractError(f"tensor dimensions must be positive, got {array.shape}")
        self.data = array
        self.grad = None
        self.requires_grad = requires_grad
        self.node = None
        self.name = name

    @classmethod
    def _from_op(cls, data: np.ndarray, node: Function | None) -> Tensor:
        tensor = cls.__new__(cls)
        tensor.data = data
        tensor.grad = None
        tensor.requires_grad = node is not None
        tensor.node = node
        tensor.name = None
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        """Return the value of a single-element tensor as a python float."""
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        """Return a leaf sharing this tensor's values but not its history."""
        return Tensor._from_op(self.data, None)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> ComputeGraph:
        """Backpropagate from this scalar tensor. See `backward`."""
        return backward(self)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        op = f" op={self.node.kind}" if self.node is not None else ""
        return f"<Tensor{label} shape={self.shape} dtype={self.dtype} requires_grad={self.requires_grad}{op}>"


class Function(abc.ABC):
    """One op record in a compute graph.

    Subclasses implement `forward` over numpy arrays, saving on `self` whatever `backward` needs, and
    `backward`, which maps the gradient of the output to one gradient (or None) per input.
    """

    kind: ClassVar[str] = "op"

    inputs: tuple[Tensor, ...]

    def __init__(self, *inputs: Tensor) -> None:
        self.inputs = inputs

    @abc.abstractmethod
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        """Compute the op's output from its input arrays."""

    @abc.abstractmethod
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        """Return the gradient with respect to each input, given the gradient of the output."""

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: object) -> Tensor:
        """Run the op forward and, when gradients are enabled, link the output into the graph."""
        for tensor in inputs:
            if not isinstance(tensor, Tensor):
                raise ContractError(f"{cls.kind} expects Tensor inputs, got {type(tensor).__name__}")
        function = cls(*inputs)
        for key, value in kwargs.items():
            setattr(function, key, value)
        output = function.forward(*(tensor.data for tensor in inputs))
        if not np.all(np.isfinite(output)):
            raise NumericError(f"{cls.kind} produced non-finite values")
        record = grad_enabled() and any(tensor.requires_grad for tensor in inputs)
        return Tensor._from_op(output, function if record else None)


class ComputeGraph:
    """The ops reachable from an output tensor, in topological order (inputs before consumers)."""

    def __init__(self, output: Tensor, order: list[Tensor]) -> None:
        self.output = output
        self._order = order

    @classmethod
    def from_output(cls, output: Tensor) -> ComputeGraph:
        """Collect every tensor requiring grad that `output` depends on."""
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor.node is not None:
                for parent in tensor.node.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(output, order)

    @property
    def tensors(self) -> list[Tensor]:
        return list(self._order)

    @property
    def nodes(self) -> list[Function]:
        """The op records, inputs first."""
        return [tensor.node for tensor in self._order if tensor.node is not None]

    def backward(self) -> None:
        """Populate `.grad` on every tensor in the graph, visiting each node once, outputs first."""
        self.output.grad = np.ones_like(self.output.data)
        for tensor in reversed(self._order):
            node = tensor.node
            if node is None or tensor.grad is None:
                continue
            for parent, parent_grad in zip(node.inputs, node.backward(tensor.grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = np.asarray(parent_grad, dtype=parent.dtype).reshape(parent.shape)
                parent.grad = parent_grad if parent.grad is None else parent.grad + parent_grad


def backward(loss: Tensor) -> ComputeGraph:
    """Backpropagate from a scalar loss, accumulating gradients into every tensor that requires them."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("the loss does not depend on any tensor requiring grad")
    graph = ComputeGraph.from_output(loss)
    logger.debug(f"backward over {len(graph.nodes)} ops")
    graph.backward()
    return graph


__all__ = [
    "Tensor",
    "Function",
    "ComputeGraph",
    "backward",
    "no_grad",
    "float64_mode",
    "grad_enabled",
    "default_dtype",
]

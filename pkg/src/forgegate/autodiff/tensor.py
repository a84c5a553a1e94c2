"""Reverse-mode differentiable tensors.

A ``Tensor`` wraps a dense row-major numpy array plus an optional gradient
buffer. Operations (see ``ops``) record their inputs and a backward closure
on the output; ``backward`` replays those closures in reverse topological
order, accumulating into ``grad``. Gradients accumulate across calls; the
caller zeroes them between optimizer steps (the GAN step relies on this,
since generator and discriminator share subgraphs).

Everything runs in float32 by default; float64 exists for gradient-check
tests only.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from ..errors import ContractError


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple[Tensor, ...] = (),
        _backward_fn: Callable[[np.ndarray], None] | None = None,
        dtype=None,
    ):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward_fn = _backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tensor with ``requires_grad`` reachable from ``loss``.

    ``loss`` must be a scalar. Repeated calls accumulate; callers reset
    gradients explicitly between steps.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    order = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        upstream = grads.pop(id(node), None)
        if upstream is None:
            continue
        if node._backward_fn is None:
            # leaf: this is where gradients persist
            node.accumulate_grad(upstream)
            continue
        for parent, local in node._backward_fn(upstream):
            if local is None:
                continue
            existing = grads.get(id(parent))
            if existing is None:
                grads[id(parent)] = local
            else:
                existing += local


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()

# Copyright 2025 The Skillchain Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Reverse-mode differentiation over numpy arrays.

A `GradientTape` owns the leaves it watches. Every operation whose inputs
include a leaf (or a node derived from one) is appended to that tape, so the
tape's node list is already in topological order. Operations on untracked
inputs produce plain constant nodes and cost nothing beyond the numpy call,
which keeps rollouts on the same code path as training.

Only the operations the networks in this package need are implemented.
"""

from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from skillchain.errors import UsageError

_VJP = Callable[[np.ndarray], np.ndarray]


class Node:
    """A value in the computation graph."""

    __slots__ = ("value", "parents", "tape", "name")

    def __init__(
        self,
        value: np.ndarray,
        parents: Tuple[Tuple["Node", _VJP], ...] = (),
        tape: Optional["GradientTape"] = None,
        name: Optional[str] = None,
    ):
        self.value = value
        self.parents = parents
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def T(self) -> "Node":
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def __repr__(self) -> str:
        tracked = "tracked" if self.tape is not None else "const"
        return f"Node(shape={self.shape}, {tracked})"


class GradientTape:
    """Records the operations behind one scalar loss.

    Usage:
        with GradientTape() as tape:
            leaves = tape.watch(params.arrays, scope="policy/")
            loss = ...
        grads = tape.backward(loss)
    """

    def __init__(self):
        self._nodes: List[Node] = []
        self._leaves: Dict[str, Node] = {}

    def __enter__(self) -> "GradientTape":
        return self

    def __exit__(self, *exc) -> None:
        return None

    def watch(
        self, arrays: Mapping[str, np.ndarray], scope: str = ""
    ) -> Dict[str, Node]:
        """Returns tracked leaves for `arrays`, keyed by their unscoped names.

        Watching the same scoped name twice returns the existing leaf so a
        network applied several times inside one loss shares its gradients.
        """
        leaves = {}
        for name, array in arrays.items():
            key = scope + name
            leaf = self._leaves.get(key)
            if leaf is None:
                leaf = Node(np.asarray(array, dtype=np.float64), tape=self)
                leaf.name = key
                self._leaves[key] = leaf
                self._nodes.append(leaf)
            leaves[name] = leaf
        return leaves

    def _record(self, node: Node) -> Node:
        self._nodes.append(node)
        return node

    def backward(self, loss: Node) -> Dict[str, np.ndarray]:
        """Returns d(loss)/d(leaf) for every watched leaf, keyed by scoped name.

        Raises:
            UsageError: if the loss is not a scalar.
        """
        if not isinstance(loss, Node):
            loss = Node(np.asarray(loss, dtype=np.float64))
        if loss.value.size != 1:
            raise UsageError(
                f"backward needs a scalar loss, got shape {loss.shape}."
            )
        grads: Dict[int, np.ndarray] = {}
        if loss.tape is self:
            grads[id(loss)] = np.ones_like(loss.value)
            for node in reversed(self._nodes):
                g = grads.get(id(node))
                if g is None:
                    continue
                for parent, vjp in node.parents:
                    if parent.tape is not self:
                        continue
                    contribution = vjp(g)
                    previous = grads.get(id(parent))
                    grads[id(parent)] = (
                        contribution
                        if previous is None
                        else previous + contribution
                    )
        return {
            key: grads.get(id(leaf), np.zeros_like(leaf.value))
            for key, leaf in self._leaves.items()
        }


def as_node(x) -> Node:
    if isinstance(x, Node):
        return x
    return Node(np.asarray(x, dtype=np.float64))


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Node) else np.asarray(x, np.float64)


def _make(value: np.ndarray, parents: Sequence[Tuple[Node, _VJP]]) -> Node:
    tape = None
    for parent, _ in parents:
        if parent.tape is not None:
            tape = parent.tape
            break
    if tape is None:
        return Node(value)
    return tape._record(
        Node(value, tuple((p, f) for p, f in parents if p.tape is tape), tape)
    )


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return _make(
        a.value + b.value,
        [
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: _unbroadcast(g, b.shape)),
        ],
    )


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return _make(
        a.value - b.value,
        [
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: _unbroadcast(-g, b.shape)),
        ],
    )


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return _make(
        a.value * b.value,
        [
            (a, lambda g: _unbroadcast(g * b.value, a.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.shape)),
        ],
    )


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    out = a.value / b.value
    return _make(
        out,
        [
            (a, lambda g: _unbroadcast(g / b.value, a.shape)),
            (b, lambda g: _unbroadcast(-g * out / b.value, b.shape)),
        ],
    )


def neg(a) -> Node:
    a = as_node(a)
    return _make(-a.value, [(a, lambda g: -g)])


def matmul(a, b) -> Node:
    """Matrix product with numpy broadcasting over leading dimensions."""
    a, b = as_node(a), as_node(b)
    if a.ndim < 2 or b.ndim < 2:
        raise UsageError("matmul operands must be at least 2-D.")
    return _make(
        a.value @ b.value,
        [
            (
                a,
                lambda g: _unbroadcast(
                    g @ np.swapaxes(b.value, -1, -2), a.shape
                ),
            ),
            (
                b,
                lambda g: _unbroadcast(
                    np.swapaxes(a.value, -1, -2) @ g, b.shape
                ),
            ),
        ],
    )


def tanh(a) -> Node:
    a = as_node(a)
    out = np.tanh(a.value)
    return _make(out, [(a, lambda g: g * (1.0 - out * out))])


def elu(a) -> Node:
    a = as_node(a)
    x = a.value
    neg_part = np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0.0, x, neg_part)
    slope = np.where(x > 0.0, 1.0, neg_part + 1.0)
    return _make(out, [(a, lambda g: g * slope)])


def exp(a) -> Node:
    a = as_node(a)
    out = np.exp(a.value)
    return _make(out, [(a, lambda g: g * out)])


def log(a) -> Node:
    a = as_node(a)
    return _make(np.log(a.value), [(a, lambda g: g / a.value)])


def square(a) -> Node:
    a = as_node(a)
    return _make(a.value * a.value, [(a, lambda g: 2.0 * g * a.value)])


def sum(a, axis=None, keepdims: bool = False) -> Node:  # noqa: A001
    a = as_node(a)
    out = np.sum(a.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape).copy()

    return _make(np.asarray(out), [(a, vjp)])


def mean(a, axis=None, keepdims: bool = False) -> Node:
    a = as_node(a)
    count = a.value.size if axis is None else a.shape[axis]
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def softmax(a, axis: int = -1) -> Node:
    a = as_node(a)
    shifted = a.value - np.max(a.value, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        return out * (g - np.sum(g * out, axis=axis, keepdims=True))

    return _make(out, [(a, vjp)])


def reshape(a, shape: Tuple[int, ...]) -> Node:
    a = as_node(a)
    original = a.shape
    return _make(
        a.value.reshape(shape), [(a, lambda g: g.reshape(original))]
    )


def transpose(a, axes: Optional[Tuple[int, ...]] = None) -> Node:
    a = as_node(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _make(
        np.transpose(a.value, axes),
        [(a, lambda g: np.transpose(g, inverse))],
    )


def getitem(a, index) -> Node:
    a = as_node(a)

    def vjp(g):
        full = np.zeros_like(a.value)
        np.add.at(full, index, g)
        return full

    return _make(a.value[index], [(a, vjp)])


def minimum(a, b) -> Node:
    """Elementwise minimum; ties route the gradient to `a`."""
    a, b = as_node(a), as_node(b)
    pick_a = a.value <= b.value
    return _make(
        np.where(pick_a, a.value, b.value),
        [
            (a, lambda g: _unbroadcast(np.where(pick_a, g, 0.0), a.shape)),
            (b, lambda g: _unbroadcast(np.where(pick_a, 0.0, g), b.shape)),
        ],
    )


def maximum(a, b) -> Node:
    """Elementwise maximum; ties route the gradient to `a`."""
    a, b = as_node(a), as_node(b)
    pick_a = a.value >= b.value
    return _make(
        np.where(pick_a, a.value, b.value),
        [
            (a, lambda g: _unbroadcast(np.where(pick_a, g, 0.0), a.shape)),
            (b, lambda g: _unbroadcast(np.where(pick_a, 0.0, g), b.shape)),
        ],
    )


def clip(a, low: float, high: float) -> Node:
    """Clamps to [low, high]; the gradient is zero outside the open interval."""
    a = as_node(a)
    inside = (a.value > low) & (a.value < high)
    return _make(
        np.clip(a.value, low, high),
        [(a, lambda g: np.where(inside, g, 0.0))],
    )

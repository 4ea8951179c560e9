"""Dense 2-D matrix math with a reverse-mode tape.

Everything is 64-bit and strictly two-dimensional: row vectors are (1, n),
column vectors (n, 1), scalars (1, 1). The tape is rebuilt on every forward
pass (dynamic graph); `backward_sweep` walks it once in reverse topological
order. Plain-array `*_values` helpers mirror each graph op so that callers
needing values only (evaluation, finite differences) can skip node
construction entirely while producing bit-identical numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, DomainError

CLAMP_EPS = 1e-12


def tensor2d(data) -> np.ndarray:
    """Coerce to a C-contiguous float64 matrix."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D tensor, got shape {arr.shape}")
    return arr


class Node:
    """A tape entry: a value, slots for its adjoint, and its provenance."""

    __slots__ = ("value", "adjoint", "parents", "backward_fn")

    def __init__(self, value: np.ndarray, parents: tuple["Node", ...] = (),
                 backward_fn: Callable[[np.ndarray], None] | None = None):
        self.value = value
        self.adjoint: np.ndarray | None = None
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape


def constant(data) -> Node:
    return Node(tensor2d(data))


# ---------------------------------------------------------------------------
# value-level helpers (shared by graph ops and the fast value-only path)
# ---------------------------------------------------------------------------

def dense_values(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[1] != w.shape[0]:
        raise DimensionError(
            f"dense: input {x.shape} does not conform with weight {w.shape}")
    if b.shape != (1, w.shape[1]):
        raise DimensionError(
            f"dense: bias {b.shape} does not match weight {w.shape}")
    return x @ w + b


def relu_values(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


LEAKY_SLOPE = 0.01


def leaky_relu_values(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    return np.maximum(x, slope * x)


def sigmoid_values(x: np.ndarray) -> np.ndarray:
    """Stable logistic, clamped to [eps, 1-eps] so downstream logs are safe."""
    return np.clip(expit(x), CLAMP_EPS, 1.0 - CLAMP_EPS)


def softmax_rows_values(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_vec(scores) -> np.ndarray:
    """Softmax of a 1-D score vector, computed with max-subtraction."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"softmax_vec expects a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise DomainError("softmax_vec of an empty vector is undefined")
    e = np.exp(arr - arr.max())
    return e / e.sum()


# ---------------------------------------------------------------------------
# graph operations
# ---------------------------------------------------------------------------

def dense_forward(x: Node, w: Node, b: Node) -> Node:
    """out = x @ w + b with b broadcast across rows."""
    out = Node(dense_values(x.value, w.value, b.value), (x, w, b))

    def backward(g: np.ndarray) -> None:
        x.adjoint += g @ w.value.T
        w.adjoint += x.value.T @ g
        b.adjoint += g.sum(axis=0, keepdims=True)

    out.backward_fn = backward
    return out


def relu(x: Node) -> Node:
    out = Node(relu_values(x.value), (x,))

    def backward(g: np.ndarray) -> None:
        # symmetric subgradient 1/2 at exactly zero, where the central
        # difference sees the average of the one-sided slopes
        x.adjoint += g * ((np.sign(x.value) + 1.0) * 0.5)

    out.backward_fn = backward
    return out


def leaky_relu(x: Node, slope: float = LEAKY_SLOPE) -> Node:
    """max(x, slope*x): rectification that never flattens to an exact zero,
    so downstream layers cannot sit on a kink for whole rows."""
    out = Node(leaky_relu_values(x.value, slope), (x,))

    def backward(g: np.ndarray) -> None:
        base = (np.sign(x.value) + 1.0) * 0.5
        x.adjoint += g * (slope + (1.0 - slope) * base)

    out.backward_fn = backward
    return out


def sigmoid(x: Node) -> Node:
    out = Node(sigmoid_values(x.value), (x,))

    def backward(g: np.ndarray) -> None:
        x.adjoint += g * (out.value * (1.0 - out.value))

    out.backward_fn = backward
    return out


def log(x: Node) -> Node:
    out = Node(np.log(x.value), (x,))

    def backward(g: np.ndarray) -> None:
        x.adjoint += g / x.value

    out.backward_fn = backward
    return out


def add(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise DimensionError(f"add: shapes {a.value.shape} and {b.value.shape} differ")
    out = Node(a.value + b.value, (a, b))

    def backward(g: np.ndarray) -> None:
        a.adjoint += g
        b.adjoint += g

    out.backward_fn = backward
    return out


def mul(a: Node, b: Node) -> Node:
    """Elementwise product; either operand may be a (rows, 1) column that
    broadcasts across the other's columns."""
    try:
        value = a.value * b.value
    except ValueError as exc:
        raise DimensionError(
            f"mul: shapes {a.value.shape} and {b.value.shape} do not broadcast") from exc

    def backward(g: np.ndarray) -> None:
        ga = g * b.value
        gb = g * a.value
        if ga.shape != a.value.shape:
            ga = ga.sum(axis=1, keepdims=True)
        if gb.shape != b.value.shape:
            gb = gb.sum(axis=1, keepdims=True)
        a.adjoint += ga
        b.adjoint += gb

    return Node(value, (a, b), backward)


def affine(x: Node, scale: float, shift: float = 0.0) -> Node:
    """scale * x + shift with float constants."""
    out = Node(scale * x.value + shift, (x,))

    def backward(g: np.ndarray) -> None:
        x.adjoint += scale * g

    out.backward_fn = backward
    return out


def mul_const(x: Node, c: np.ndarray) -> Node:
    """Elementwise product with a constant array of the same shape."""
    if c.shape != x.value.shape:
        raise DimensionError(f"mul_const: shapes {x.value.shape} and {c.shape} differ")
    out = Node(x.value * c, (x,))

    def backward(g: np.ndarray) -> None:
        x.adjoint += g * c

    out.backward_fn = backward
    return out


def sum_all(x: Node) -> Node:
    out = Node(np.array([[x.value.sum()]]), (x,))

    def backward(g: np.ndarray) -> None:
        x.adjoint += g[0, 0]

    out.backward_fn = backward
    return out


def mean_all(x: Node) -> Node:
    n = x.value.size
    out = Node(np.array([[x.value.sum() / n]]), (x,))

    def backward(g: np.ndarray) -> None:
        x.adjoint += g[0, 0] / n

    out.backward_fn = backward
    return out


def scaled_row_dot(a: Node, b: Node, scale: float) -> Node:
    """Per-row dot product scale * <a_i, b_i>, returned as a column."""
    if a.value.shape != b.value.shape:
        raise DimensionError(
            f"scaled_row_dot: shapes {a.value.shape} and {b.value.shape} differ")
    value = (a.value * b.value).sum(axis=1, keepdims=True) * scale
    out = Node(value, (a, b))

    def backward(g: np.ndarray) -> None:
        a.adjoint += (g * scale) * b.value
        b.adjoint += (g * scale) * a.value

    out.backward_fn = backward
    return out


def hstack(columns: Sequence[Node]) -> Node:
    """Concatenate (rows, 1) columns into a (rows, m) matrix."""
    value = np.concatenate([c.value for c in columns], axis=1)
    out = Node(value, tuple(columns))

    def backward(g: np.ndarray) -> None:
        for j, c in enumerate(columns):
            c.adjoint += g[:, j:j + 1]

    out.backward_fn = backward
    return out


def column(x: Node, j: int) -> Node:
    out = Node(np.ascontiguousarray(x.value[:, j:j + 1]), (x,))

    def backward(g: np.ndarray) -> None:
        x.adjoint[:, j:j + 1] += g

    out.backward_fn = backward
    return out


def softmax_rows(x: Node) -> Node:
    s = softmax_rows_values(x.value)
    out = Node(s, (x,))

    def backward(g: np.ndarray) -> None:
        x.adjoint += s * (g - (g * s).sum(axis=1, keepdims=True))

    out.backward_fn = backward
    return out


def gather_rows(x: Node, idx: np.ndarray) -> Node:
    """Select rows by index; indices must be unique."""
    out = Node(np.ascontiguousarray(x.value[idx]), (x,))

    def backward(g: np.ndarray) -> None:
        x.adjoint[idx] += g

    out.backward_fn = backward
    return out


# ---------------------------------------------------------------------------
# backward sweep
# ---------------------------------------------------------------------------

def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward_sweep(root: Node) -> None:
    """Populate adjoints of every ancestor of a scalar root.

    Adjoints of all reachable nodes are zeroed first, then accumulated
    additively in reverse topological order, so after the sweep each node
    holds exactly d(root)/d(node) for this graph.
    """
    if root.value.shape != (1, 1):
        raise ContractError(
            f"backward_sweep root must be a 1x1 scalar, got shape {root.value.shape}")
    order = _toposort(root)
    for node in order:
        node.adjoint = np.zeros_like(node.value)
    root.adjoint[0, 0] = 1.0
    for node in reversed(order):
        if node.backward_fn is not None:
            node.backward_fn(node.adjoint)


# ---------------------------------------------------------------------------
# parameter store
# ---------------------------------------------------------------------------

class ParamStore:
    """Named trainable tensors with deterministic, seeded initialization.

    Weight matrices are drawn uniform(+-sqrt(6/(fan_in+fan_out))), biases
    start at zero. Insertion order is preserved and is part of the
    determinism contract: the same creation sequence under the same seed
    yields identical parameters.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._params: dict[str, Node] = {}
        # optional stacked storage: a parameter's value may be a contiguous
        # view into one of these buffers, letting vectorized forward paths
        # read whole groups without restacking (see model.fused_forward_probs)
        self.groups: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> Node:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        node = Node(tensor2d(value))
        self._params[name] = node
        return node

    def add_dense(self, name: str, fan_in: int, fan_out: int,
                  slots: tuple[np.ndarray, np.ndarray] | None = None) -> tuple[Node, Node]:
        """Create an initialized weight/bias pair; when group-buffer slots are
        given, the parameters live inside them as views."""
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = self._rng.uniform(-limit, limit, size=(fan_in, fan_out))
        if slots is None:
            weight = self.add(name + ".w", w)
            bias = self.add(name + ".b", np.zeros((1, fan_out)))
        else:
            w_slot, b_slot = slots
            w_slot[...] = w
            b_slot[...] = 0.0
            weight = self.add(name + ".w", w_slot)
            bias = self.add(name + ".b", b_slot)
        return weight, bias

    def __getitem__(self, name: str) -> Node:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Node]]:
        return iter(self._params.items())

    def n_scalars(self) -> int:
        return sum(node.value.size for node in self._params.values())

    def zero_adjoints(self) -> None:
        for node in self._params.values():
            node.adjoint = np.zeros_like(node.value)

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: node.value.copy() for name, node in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self._params):
            missing = set(self._params) - set(values)
            extra = set(values) - set(self._params)
            raise ContractError(
                f"parameter name mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, arr in values.items():
            node = self._params[name]
            arr = tensor2d(arr)
            if arr.shape != node.value.shape:
                raise ContractError(
                    f"parameter {name!r}: shape {arr.shape} does not match {node.value.shape}")
            # copy in place: values may be views into stacked group buffers
            node.value[...] = arr


# ---------------------------------------------------------------------------
# finite-difference gradient check
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    worst_rel_error: float
    worst_name: str
    n_scalars: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst_rel_error < self.tol

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"gradcheck {status}: worst rel. error {self.worst_rel_error:.3e} "
                f"at {self.worst_name!r} over {self.n_scalars} scalars (tol {self.tol:g})")


def finite_diff_check(params: ParamStore, loss_fn: Callable[[], Node],
                      step: float = 1e-6, tol: float = 1e-4,
                      value_fn: Callable[[], float] | None = None) -> GradCheckReport:
    """Compare analytic adjoints of loss_fn against central differences.

    loss_fn rebuilds the loss graph from the current parameter values; the
    optional value_fn is a cheaper evaluator of the same scalar used for the
    2 * n_scalars perturbed evaluations. Relative error uses a
    max(1, |analytic|) denominator. The default step keeps the probability
    of a rectifier kink falling inside the difference window negligible;
    large steps make spurious mismatches near kinks likely.
    """
    if value_fn is None:
        value_fn = lambda: float(loss_fn().value[0, 0])

    if value_fn() != value_fn():
        raise ContractError("loss function is not deterministic under fixed parameters")

    params.zero_adjoints()
    backward_sweep(loss_fn())
    adjoints = {name: node.adjoint.copy() for name, node in params.items()}

    worst = 0.0
    worst_name = ""
    n_checked = 0
    for name, node in params.items():
        flat = node.value.reshape(-1)
        analytic = adjoints[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = value_fn()
            flat[i] = orig - step
            f_minus = value_fn()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            rel = abs(analytic[i] - fd) / max(1.0, abs(analytic[i]))
            if rel > worst:
                worst = rel
                worst_name = name
            n_checked += 1
    return GradCheckReport(worst, worst_name, n_checked, tol)

"""
Dense tensors with reverse-mode automatic differentiation.

Values are float64 numpy arrays. Operations recorded while a Graph is active
(``with Graph() as g:``) can be differentiated with ``g.backward(loss)``;
outside a graph the same functions just compute values, which is how frozen
scorers run inference.
"""

from __future__ import annotations

import contextvars
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from errors import ConfigError, DomainError, ShapeError, UsageError

__docformat__ = 'reStructuredText'

logger = logging.getLogger(__name__)

INIT_SCALE = 0.08

_ACTIVE_GRAPH: contextvars.ContextVar[Graph | None] = contextvars.ContextVar("active_graph", default=None)


class Tensor:
    """ A dense float64 array with an optional gradient.

    Attributes:
        values (np.ndarray): the data, every dimension positive
        grad (np.ndarray | None): gradient of the same shape, populated by backward
        requires_grad (bool): True for parameters and for values derived from them
        name (str | None): parameter name used by checkpoints
        update_mask (np.ndarray | None): 0/1 array broadcastable to values, applied by sgd_step
    """

    def __init__(self, values, requires_grad: bool = False, name: str | None = None) -> None:
        array = np.array(values, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1)
        if any(d <= 0 for d in array.shape):
            raise ShapeError(f"tensor dimensions must be positive, got {array.shape}")
        self.values = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.update_mask: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        """ The single value of a scalar tensor.
        :raises UsageError: if the tensor holds more than one value
        """
        if self.values.size != 1:
            raise UsageError(f"item() on a tensor of shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    """ Wrap constants; tensors pass through untouched. """
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(shape: Sequence[int], rng: np.random.Generator, name: str, scale: float = INIT_SCALE) -> Tensor:
    """ A trainable tensor drawn uniformly from [-scale, scale]. """
    return Tensor(rng.uniform(-scale, scale, size=tuple(shape)), requires_grad=True, name=name)


def zeros_parameter(shape: Sequence[int], name: str) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), requires_grad=True, name=name)


@dataclass
class Node:
    """ One recorded operation. ``backward`` maps the output gradient to input gradients. """
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


@dataclass(eq=False)
class Graph:
    """ Operation tape. Recording order is a topological order of the graph.

    A graph supports exactly one backward pass; build a new one for the next
    forward computation.
    """
    nodes: list[Node] = field(default_factory=list)
    consumed: bool = False
    _token: contextvars.Token | None = field(default=None, repr=False)

    def __enter__(self) -> Graph:
        self._token = _ACTIVE_GRAPH.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_GRAPH.reset(self._token)
        self._token = None

    def record(self, kind: str, inputs: tuple[Tensor, ...], output: Tensor, backward) -> None:
        if self.consumed:
            raise UsageError("graph already ran backward; start a new Graph for a new forward pass")
        output.requires_grad = True
        self.nodes.append(Node(kind, inputs, output, backward))

    def backward(self, loss: Tensor) -> None:
        """ Populate ``grad`` on every trainable leaf reachable from ``loss``.

        Leaf gradients accumulate into any gradient already present, so several
        graphs may contribute before one sgd_step.

        :pre: loss is scalar and was produced inside this graph
        :raises UsageError: non-scalar loss, loss not recorded here, or second call
        :complexity: O(number of recorded nodes)
        """
        if self.consumed:
            raise UsageError("backward already called on this graph")
        if loss.values.size != 1:
            raise UsageError(f"loss must be scalar, got shape {loss.shape}")
        produced = {id(node.output) for node in self.nodes}
        if id(loss) not in produced:
            raise UsageError("loss was not computed inside this graph")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for inp, ig in zip(node.inputs, node.backward(g)):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = np.array(ig, dtype=np.float64)
                if key not in produced:
                    leaves[key] = inp

        for key, leaf in leaves.items():
            g = grads[key].reshape(leaf.shape)
            leaf.grad = g if leaf.grad is None else leaf.grad + g
        self.consumed = True


def _emit(kind: str, inputs: tuple[Tensor, ...], values: np.ndarray, backward) -> Tensor:
    out = Tensor(values)
    graph = _ACTIVE_GRAPH.get()
    if graph is not None and any(t.requires_grad for t in inputs):
        graph.record(kind, inputs, out, backward)
    return out


# Linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """ Matrix product of a [m x k] and b [k x n].
    :raises ShapeError: if the operands are not matrices or inner dimensions differ
    """
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul {a.shape} x {b.shape}")
    av, bv = a.values, b.values
    return _emit("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))


def transpose(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got {a.shape}")
    return _emit("transpose", (a,), a.values.T.copy(), lambda g: (g.T,))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.values.size:
        raise ShapeError(f"cannot reshape {a.shape} into {shape}")
    original = a.shape
    return _emit("reshape", (a,), a.values.reshape(shape).copy(), lambda g: (g.reshape(original),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """ Join tensors along an existing axis. """
    if not tensors:
        raise DomainError("concat of no tensors")
    try:
        values = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", tuple(tensors), values, backward)


def take_rows(x: Tensor, indices: Sequence[int]) -> Tensor:
    """ Gather rows of a matrix (embedding lookup, time-step selection). """
    idx = np.asarray(indices, dtype=np.int64)
    if x.values.ndim != 2 or idx.size == 0:
        raise ShapeError(f"take_rows on {x.shape} with {idx.size} indices")
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _emit("take_rows", (x,), x.values[idx], backward)


def add_row_vector(x: Tensor, b: Tensor) -> Tensor:
    """ Add a vector b [d] to every row of x [T x d]. """
    if x.values.ndim != 2 or b.values.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_row_vector {x.shape} + {b.shape}")
    return _emit("add_row_vector", (x, b), x.values + b.values, lambda g: (g, g.sum(axis=0)))


def scale(a: Tensor, c: float) -> Tensor:
    return _emit("scale", (a,), a.values * c, lambda g: (g * c,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit("sum", (a,), np.array([a.values.sum()]), lambda g: (np.full(shape, g.reshape(-1)[0]),))


# Pointwise

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


UNARY_KINDS = ("tanh", "sigmoid", "exp", "relu")
BINARY_KINDS = ("add", "sub", "mul")


def elementwise(kind: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """ Pointwise operation.

    Args:
        kind: one of add, sub, mul (binary) or tanh, sigmoid, exp, relu (unary)
        a: first operand
        b: second operand, same shape as a, for binary kinds

    :raises ShapeError: binary operands of different shapes
    :raises UsageError: unknown kind or wrong arity
    """
    av = a.values
    if kind in BINARY_KINDS:
        if b is None:
            raise UsageError(f"{kind} needs two operands")
        if a.shape != b.shape:
            raise ShapeError(f"{kind} {a.shape} vs {b.shape}")
        bv = b.values
        if kind == "add":
            return _emit(kind, (a, b), av + bv, lambda g: (g, g))
        if kind == "sub":
            return _emit(kind, (a, b), av - bv, lambda g: (g, -g))
        return _emit(kind, (a, b), av * bv, lambda g: (g * bv, g * av))

    if kind not in UNARY_KINDS or b is not None:
        raise UsageError(f"unknown elementwise kind or arity: {kind}")
    if kind == "tanh":
        out = np.tanh(av)
        return _emit(kind, (a,), out, lambda g: (g * (1.0 - out * out),))
    if kind == "sigmoid":
        out = _sigmoid(av)
        return _emit(kind, (a,), out, lambda g: (g * out * (1.0 - out),))
    if kind == "exp":
        out = np.exp(av)
        return _emit(kind, (a,), out, lambda g: (g * out,))
    out = np.maximum(av, 0.0)
    return _emit(kind, (a,), out, lambda g: (g * (av > 0.0),))


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("mul", a, b)


def tanh(a: Tensor) -> Tensor:
    return elementwise("tanh", a)


def sigmoid(a: Tensor) -> Tensor:
    return elementwise("sigmoid", a)


def exp(a: Tensor) -> Tensor:
    return elementwise("exp", a)


def relu(a: Tensor) -> Tensor:
    return elementwise("relu", a)


# Pooling, similarity, normalisation

def max_pool_rows(h: Tensor) -> Tensor:
    """ Per-column maximum over the rows of h [T x d], giving [d].

    The gradient goes to the argmax row of each column, the first one on ties.

    :raises DomainError: if h has no rows or is not a matrix
    """
    if h.values.ndim != 2 or h.shape[0] < 1:
        raise DomainError(f"max_pool_rows needs a non-empty matrix, got {h.shape}")
    arg = np.argmax(h.values, axis=0)
    cols = np.arange(h.shape[1])
    shape = h.shape

    def backward(g):
        full = np.zeros(shape)
        full[arg, cols] = g
        return (full,)

    return _emit("max_pool_rows", (h,), h.values[arg, cols], backward)


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """ Cosine similarity of two vectors, returned as a 1-element tensor.

    No epsilon is added: a zero vector is a degenerate encoding and is reported.

    :raises ShapeError: if a and b are not vectors of equal length
    :raises DomainError: if either vector has zero norm
    """
    if a.values.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"cosine {a.shape} vs {b.shape}")
    av, bv = a.values, b.values
    na, nb = float(np.linalg.norm(av)), float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise DomainError("cosine of a zero-norm vector")
    c = float(av @ bv) / (na * nb)

    def backward(g):
        s = g.reshape(-1)[0]
        ga = bv / (na * nb) - c * av / (na * na)
        gb = av / (na * nb) - c * bv / (nb * nb)
        return (s * ga, s * gb)

    return _emit("cosine", (a, b), np.array([c]), backward)


def softmax(x: Tensor) -> Tensor:
    """ Softmax over a vector, computed with max-subtraction. """
    if x.values.ndim != 1:
        raise ShapeError(f"softmax needs a vector, got {x.shape}")
    z = np.exp(x.values - x.values.max())
    s = z / z.sum()
    return _emit("softmax", (x,), s, lambda g: (s * (g - float(g @ s)),))


def conv1d(x: Tensor, filters: Tensor) -> Tensor:
    """ Same-length 1-d convolution of x [T x d_in] with filters [w x d_in x d_out].

    Zero padding of (w-1)/2 rows on each side; no bias or nonlinearity.

    :raises ConfigError: even window
    :raises ShapeError: input width does not match the filters
    """
    if filters.values.ndim != 3:
        raise ShapeError(f"filters must be [w x d_in x d_out], got {filters.shape}")
    w, d_in, _ = filters.shape
    if w % 2 == 0:
        raise ConfigError(f"convolution window must be odd, got {w}")
    if x.values.ndim != 2 or x.shape[1] != d_in:
        raise ShapeError(f"conv1d input {x.shape} vs filters {filters.shape}")
    T = x.shape[0]
    pad = (w - 1) // 2
    xp = np.pad(x.values, ((pad, pad), (0, 0)))
    fv = filters.values
    out = sum(xp[k:k + T] @ fv[k] for k in range(w))

    def backward(g):
        gxp = np.zeros_like(xp)
        gf = np.zeros_like(fv)
        for k in range(w):
            gxp[k:k + T] += g @ fv[k].T
            gf[k] = xp[k:k + T].T @ g
        return (gxp[pad:pad + T], gf)

    return _emit("conv1d", (x, filters), out, backward)


def weighted_sum_rows(w: Tensor, h: Tensor) -> Tensor:
    """ sum_i w[i] * h[i] for w [n] and h [n x d], giving [d]. """
    if w.values.ndim != 1 or h.values.ndim != 2 or w.shape[0] != h.shape[0]:
        raise ShapeError(f"weighted_sum_rows {w.shape} with {h.shape}")
    return reshape(matmul(reshape(w, (1, w.shape[0])), h), (h.shape[1],))


# Optimisation

def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    """ values <- values - lr * grad, then clear the gradients.

    A parameter's update_mask, when set, zeroes the update on masked entries.

    :raises UsageError: a parameter has no gradient, or lr is negative
    """
    params = list(params)
    if lr < 0:
        raise UsageError(f"learning rate must be non-negative, got {lr}")
    missing = [p.name or repr(p) for p in params if p.grad is None]
    if missing:
        raise UsageError(f"no gradient for: {', '.join(missing)}")
    for p in params:
        step = lr * p.grad
        if p.update_mask is not None:
            step = step * p.update_mask
        p.values -= step
        p.grad = None


# Finite-difference checking

@dataclass
class GradientReport:
    """ Analytic against central-difference gradients, one entry per coordinate. """
    analytic: np.ndarray
    numeric: np.ndarray
    relative_error: np.ndarray

    def fraction_within(self, tolerance: float) -> float:
        if self.relative_error.size == 0:
            return 1.0
        return float(np.mean(self.relative_error <= tolerance))


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor],
                    step: float = 1e-4, floor: float = 1e-7) -> GradientReport:
    """ Compare backward against central finite differences.

    Args:
        loss_fn: builds a scalar loss from the current parameter values
        params: tensors to perturb
        step: finite-difference step
        floor: coordinates where both gradients are below this magnitude count as exact

    Returns:
        GradientReport over the concatenation of all parameter coordinates.

    Complexity:
        O(P * F) where P is the number of coordinates and F the cost of loss_fn.
    """
    for p in params:
        p.grad = None
    with Graph() as graph:
        loss = loss_fn()
    graph.backward(loss)
    analytic = np.concatenate([
        (p.grad if p.grad is not None else np.zeros_like(p.values)).reshape(-1) for p in params
    ])
    for p in params:
        p.grad = None

    numeric = []
    for p in params:
        for idx in np.ndindex(*p.shape):
            original = p.values[idx]
            p.values[idx] = original + step
            plus = loss_fn().item()
            p.values[idx] = original - step
            minus = loss_fn().item()
            p.values[idx] = original
            numeric.append((plus - minus) / (2.0 * step))
    numeric = np.asarray(numeric)

    magnitude = np.maximum(np.abs(analytic), np.abs(numeric))
    error = np.where(magnitude < floor, 0.0, np.abs(analytic - numeric) / np.maximum(magnitude, floor))
    return GradientReport(analytic, numeric, error)

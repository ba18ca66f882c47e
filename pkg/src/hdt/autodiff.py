"""Reverse-mode automatic differentiation on numpy arrays.

Operations on :class:`Variable` objects are appended to the active
:class:`Tape` in creation order, which is a topological order. Each recorded
node keeps one vector-Jacobian closure per parent, written in terms of
``Variable`` operations, so a backward pass run with ``create_graph=True`` is
itself recorded and can be differentiated again. That is what lets a loss be
differentiated through unrolled SGD steps.

Complex spectra travel as real arrays with a trailing axis of size 2
holding ``(Re, Im)``.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

from . import kernels, spectral
from .errors import DetachedGraph, NonScalarLoss, ShapeMismatch

MAGNITUDE_GUARD = 1e-12

_state = threading.local()


def _tapes() -> list:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
        _state.grad_enabled = True
    return _state.tapes


def _grad_enabled() -> bool:
    _tapes()
    return _state.grad_enabled


@contextmanager
def no_grad():
    _tapes()
    prev = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextmanager
def enable_grad(flag: bool = True):
    _tapes()
    prev = _state.grad_enabled
    _state.grad_enabled = flag
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tape:
    """Ordered record of operations. Use as a context manager to make it the
    target for new leaves and operations."""

    def __init__(self):
        self.nodes: list[Variable] = []

    def __enter__(self):
        _tapes().append(self)
        return self

    def __exit__(self, *exc):
        _tapes().pop()

    def __len__(self):
        return len(self.nodes)

    def _append(self, var: "Variable") -> None:
        var.index = len(self.nodes)
        self.nodes.append(var)

    def leaf(self, value, name=None) -> "Variable":
        v = Variable(value, name=name)
        v.requires_grad = True
        v.tape = self
        self._append(v)
        return v


def current_tape() -> Tape | None:
    tapes = _tapes()
    return tapes[-1] if tapes else None


class Variable:
    __array_priority__ = 1000
    __slots__ = ("value", "requires_grad", "tape", "index", "parents", "vjps", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = False
        self.tape = None
        self.index = None
        self.parents = ()
        self.vjps = ()
        self.name = name
        if requires_grad:
            tape = current_tape()
            if tape is None:  # an empty Tape is falsy, so test identity
                tape = Tape()
            self.requires_grad = True
            self.tape = tape
            tape._append(self)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Variable{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def T(self):
        return transpose(self)

    def detach(self) -> "Variable":
        return Variable(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis, keepdims)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_variable(x) -> Variable:
    return x if isinstance(x, Variable) else Variable(x)


def _result(value, parents, vjps) -> Variable:
    """Wrap ``value``; record it when grad mode is on and a parent is live."""
    out = Variable(value)
    if not _grad_enabled():
        return out
    tape = None
    live = []
    for p, fn in zip(parents, vjps):
        if p.requires_grad:
            if tape is None:
                tape = p.tape
            elif p.tape is not tape:
                raise DetachedGraph("operands were recorded on different tapes")
            live.append(fn)
        else:
            live.append(None)
    if tape is None:
        return out
    out.requires_grad = True
    out.tape = tape
    out.parents = tuple(parents)
    out.vjps = tuple(live)
    tape._append(out)
    return out


# ---------------------------------------------------------------- shapes


def _unbroadcast(g: Variable, shape) -> Variable:
    if g.shape == tuple(shape):
        return g
    return sum_to(g, shape)


def sum_to(a, shape) -> Variable:
    """Sum ``a`` down to a shape it was broadcast from."""
    a = as_variable(a)
    shape = tuple(shape)
    value = a.value
    lead = value.ndim - len(shape)
    if lead < 0:
        raise ShapeMismatch(f"cannot sum {value.shape} to {shape}")
    if lead:
        value = value.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and value.shape[i] != 1)
    if axes:
        value = value.sum(axis=axes, keepdims=True)
    src = a.shape
    return _result(value.reshape(shape), (a,), (lambda g: broadcast_to(g, src),))


def broadcast_to(a, shape) -> Variable:
    a = as_variable(a)
    shape = tuple(shape)
    src = a.shape
    try:
        value = np.broadcast_to(a.value, shape).copy()
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    return _result(value, (a,), (lambda g: sum_to(g, src),))


def reshape(a, shape) -> Variable:
    a = as_variable(a)
    src = a.shape
    try:
        value = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    return _result(value, (a,), (lambda g: reshape(g, src),))


def transpose(a, axes=None) -> Variable:
    a = as_variable(a)
    value = np.transpose(a.value, axes)
    inverse = None if axes is None else tuple(np.argsort(axes))
    return _result(value, (a,), (lambda g: transpose(g, inverse),))


def getitem(a, index) -> Variable:
    a = as_variable(a)
    src = a.shape
    return _result(a.value[index], (a,), (lambda g: scatter(g, index, src),))


def scatter(g, index, shape) -> Variable:
    """Zeros of ``shape`` with ``g`` added at ``index`` (adjoint of indexing)."""
    g = as_variable(g)
    out = np.zeros(shape)
    np.add.at(out, index, g.value)
    return _result(out, (g,), (lambda h: getitem(h, index),))


# ------------------------------------------------------------ arithmetic


def _binary_shapes(a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b) -> Variable:
    a, b = as_variable(a), as_variable(b)
    _binary_shapes(a, b)
    sa, sb = a.shape, b.shape
    return _result(
        a.value + b.value,
        (a, b),
        (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb)),
    )


def sub(a, b) -> Variable:
    a, b = as_variable(a), as_variable(b)
    _binary_shapes(a, b)
    sa, sb = a.shape, b.shape
    return _result(
        a.value - b.value,
        (a, b),
        (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(neg(g), sb)),
    )


def neg(a) -> Variable:
    a = as_variable(a)
    return _result(-a.value, (a,), (neg,))


def mul(a, b) -> Variable:
    a, b = as_variable(a), as_variable(b)
    _binary_shapes(a, b)
    return _result(
        a.value * b.value,
        (a, b),
        (lambda g: _unbroadcast(mul(g, b), a.shape), lambda g: _unbroadcast(mul(g, a), b.shape)),
    )


def scale(a, c: float) -> Variable:
    a = as_variable(a)
    c = float(c)
    return _result(a.value * c, (a,), (lambda g: scale(g, c),))


def div(a, b) -> Variable:
    a, b = as_variable(a), as_variable(b)
    _binary_shapes(a, b)
    out_value = a.value / b.value
    return _result(
        out_value,
        (a, b),
        (
            lambda g: _unbroadcast(div(g, b), a.shape),
            lambda g: _unbroadcast(neg(div(mul(g, a), mul(b, b))), b.shape),
        ),
    )


def matmul(a, b) -> Variable:
    a, b = as_variable(a), as_variable(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul of {a.shape} and {b.shape}")
    return _result(
        a.value @ b.value,
        (a, b),
        (lambda g: matmul(g, transpose(b)), lambda g: matmul(transpose(a), g)),
    )


def vsum(a, axis=None, keepdims=False) -> Variable:
    a = as_variable(a)
    src = a.shape
    value = a.value.sum(axis=axis, keepdims=keepdims)
    if axis is None:
        kept = (1,) * a.ndim
    else:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(ax % a.ndim for ax in axes)
        kept = tuple(1 if i in axes else s for i, s in enumerate(src))

    def vjp(g):
        return broadcast_to(reshape(g, kept), src)

    return _result(value, (a,), (vjp,))


def mean(a, axis=None) -> Variable:
    a = as_variable(a)
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return scale(vsum(a, axis), 1.0 / count)


def square(a) -> Variable:
    a = as_variable(a)
    return _result(a.value * a.value, (a,), (lambda g: mul(g, scale(a, 2.0)),))


def sqrt_guarded(a, guard: float = MAGNITUDE_GUARD) -> Variable:
    """``sqrt(a + guard**2)``; finite derivative at ``a = 0``."""
    a = as_variable(a)
    out_value = np.sqrt(a.value + guard * guard)
    holder = {}

    def vjp(g):
        return div(scale(g, 0.5), holder["out"])

    out = _result(out_value, (a,), (vjp,))
    holder["out"] = out if out.requires_grad else Variable(out_value)
    return out


def absolute(a) -> Variable:
    """``|a|`` with subgradient 0 at 0."""
    a = as_variable(a)
    sign = np.sign(a.value)
    return _result(np.abs(a.value), (a,), (lambda g: mul(g, sign),))


def complex_magnitude(z, guard: float = MAGNITUDE_GUARD) -> Variable:
    """``|Re + i Im|`` over the trailing pair axis, guarded at zero."""
    z = as_variable(z)
    if z.shape[-1] != 2:
        raise ShapeMismatch(f"expected trailing (Re, Im) axis, got {z.shape}")
    return sqrt_guarded(vsum(square(z), axis=-1), guard)


def l1_norm(a) -> Variable:
    return vsum(absolute(a))


def l2_norm_squared(a) -> Variable:
    return vsum(square(a))


def _pairs_to_complex(v: np.ndarray) -> np.ndarray:
    return v[..., 0] + 1j * v[..., 1]


def _complex_to_pairs(c: np.ndarray) -> np.ndarray:
    return np.stack([c.real, c.imag], axis=-1)


def irfft_map(z, m: int) -> Variable:
    """Inverse real DFT of ``(F, ..., 2)`` coefficient pairs to ``(m, ...)``.

    Imaginary parts of the DC bin (and Nyquist bin for even ``m``) are
    ignored, which keeps the map linear in every input coordinate.
    """
    z = as_variable(z)
    if z.shape[0] != spectral.n_bins(m) or z.shape[-1] != 2:
        raise ShapeMismatch(f"coefficient pairs {z.shape} do not fit length {m}")
    value = spectral.irfft_coeffs(_pairs_to_complex(z.value), m)
    return _result(value, (z,), (lambda g: irfft_adjoint_map(g, m),))


def irfft_adjoint_map(v, m: int) -> Variable:
    v = as_variable(v)
    value = _complex_to_pairs(spectral.irfft_adjoint(v.value, m))
    return _result(value, (v,), (lambda g: irfft_map(g, m),))


def moving_average(a, kernel_size: int) -> Variable:
    """Replicate-padded centered moving average along axis 0 of a 2-D array."""
    a = as_variable(a)
    if a.ndim != 2:
        raise ShapeMismatch(f"moving average expects 2-D input, got {a.shape}")
    value = kernels.moving_average(np.ascontiguousarray(a.value), kernel_size)
    return _result(value, (a,), (lambda g: moving_average_adjoint(g, kernel_size),))


def moving_average_adjoint(g, kernel_size: int) -> Variable:
    g = as_variable(g)
    value = kernels.moving_average_adjoint(np.ascontiguousarray(g.value), kernel_size)
    return _result(value, (g,), (lambda h: moving_average(h, kernel_size),))


# -------------------------------------------------------------- backward


def backward(loss: Variable, inputs=None, create_graph: bool = False) -> dict:
    """Gradients of a scalar ``loss``.

    Returns a dict keyed by the input variables (all leaves of the tape when
    ``inputs`` is None). Values are ``Variable`` objects recorded on the tape
    when ``create_graph`` is set, plain arrays otherwise. Inputs the loss does
    not depend on get zeros.
    """
    if not isinstance(loss, Variable) or loss.size != 1:
        raise NonScalarLoss(f"loss must be a scalar, got shape {getattr(loss, 'shape', None)}")
    if not loss.requires_grad or loss.tape is None:
        raise DetachedGraph("loss is not connected to any recorded input")
    tape = loss.tape
    nodes = tape.nodes
    if inputs is None:
        inputs = [v for v in nodes[: loss.index + 1] if not v.parents]
    inputs = list(inputs)
    for v in inputs:
        if not v.requires_grad or v.tape is not tape:
            raise DetachedGraph(f"{v!r} is not recorded on the loss's tape")

    # nodes downstream of any input; gradients only flow into those
    start = min(v.index for v in inputs) if inputs else loss.index + 1
    relevant = np.zeros(loss.index + 1, dtype=bool)
    for v in inputs:
        if v.index <= loss.index:
            relevant[v.index] = True
    for i in range(start, loss.index + 1):
        if not relevant[i]:
            node = nodes[i]
            for p, fn in zip(node.parents, node.vjps):
                if fn is not None and p.index <= loss.index and relevant[p.index]:
                    relevant[i] = True
                    break

    wanted = {v.index for v in inputs}
    found = {}
    with enable_grad(create_graph):
        grads = {loss.index: Variable(np.ones_like(loss.value))}
        for i in range(loss.index, start - 1, -1):
            g = grads.pop(i, None)
            if g is None:
                continue
            if i in wanted:
                found[i] = g
            node = nodes[i]
            for p, fn in zip(node.parents, node.vjps):
                if fn is None or p.index < start or not relevant[p.index]:
                    continue
                gp = fn(g)
                prev = grads.get(p.index)
                grads[p.index] = gp if prev is None else add(prev, gp)

    out = {}
    for v in inputs:
        g = found.get(v.index)
        if g is None:
            g = Variable(np.zeros_like(v.value))
        out[v] = g if create_graph else g.value
    return out


def grad(loss: Variable, inputs, create_graph: bool = False) -> list:
    single = isinstance(inputs, Variable)
    inputs = [inputs] if single else list(inputs)
    result = backward(loss, inputs, create_graph=create_graph)
    grads = [result[v] for v in inputs]
    return grads[0] if single else grads


def grad_check(f, x, eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference
    gradients of scalar ``f`` at ``x``.

    The error per coordinate is ``|a - c| / max(|a|, |c|, 1e-8)``.
    """
    x = np.array(x, dtype=np.float64, order="C")
    with Tape():
        leaf = Variable(x, requires_grad=True)
        analytic = grad(f(leaf), leaf)
    flat = np.zeros(x.size)
    with no_grad():
        for i in range(x.size):
            xp = x.copy().reshape(-1)
            xm = x.copy().reshape(-1)
            xp[i] += eps
            xm[i] -= eps
            fp = f(Variable(xp.reshape(x.shape))).item()
            fm = f(Variable(xm.reshape(x.shape))).item()
            flat[i] = (fp - fm) / (2 * eps)
    numeric = flat.reshape(x.shape)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))

"""Reverse-mode automatic differentiation on scalar computation graphs.

A :class:`Tape` records one scalar graph as parallel append-only lists
(parent indices, local partials, values).  Nodes are appended in
topological order, so the backward sweep is a single reverse loop that
pushes adjoints to parents.  Graphs are rebuilt per evaluation; model
parameters enter as ``param`` leaves and everything else is recomputed.

Every op here also accepts plain floats and then evaluates without a
tape, so the same model code serves both training (gradients) and
prediction (values only).
"""

from __future__ import annotations

import math
from typing import Sequence, Union

Real = Union[float, "Var"]


class DomainError(ValueError):
    """Argument outside an op's mathematical domain (log(x<=0), x/0, ...)."""


class NonFiniteError(ArithmeticError):
    """A value or gradient became NaN or infinite."""


class Tape:
    """Append-only record of one scalar computation graph.

    ``parents[i]`` / ``partials[i]`` hold the argument indices and local
    derivatives of node ``i``; ``values[i]`` its forward value.  Parents
    always precede children, so replaying the list reproduces the forward
    pass bit-for-bit.
    """

    __slots__ = ("parents", "partials", "values", "param_indices")

    def __init__(self) -> None:
        self.parents: list[tuple[int, ...]] = []
        self.partials: list[tuple[float, ...]] = []
        self.values: list[float] = []
        self.param_indices: list[int] = []

    def __len__(self) -> int:
        return len(self.values)

    def _push(self, value: float, parents: tuple[int, ...],
              partials: tuple[float, ...]) -> "Var":
        i = len(self.values)
        self.values.append(value)
        self.parents.append(parents)
        self.partials.append(partials)
        return Var(self, i, value)

    def lift(self, value: float) -> "Var":
        """Embed a constant; it never receives an adjoint entry."""
        value = float(value)
        if not math.isfinite(value):
            raise DomainError(f"cannot lift non-finite constant {value!r}")
        return self._push(value, (), ())

    def param(self, value: float) -> "Var":
        """Register a differentiable leaf (appears in the gradient map)."""
        value = float(value)
        if not math.isfinite(value):
            raise DomainError(f"cannot create param from non-finite {value!r}")
        v = self._push(value, (), ())
        self.param_indices.append(v.index)
        return v


class Var:
    """Handle to one node of a :class:`Tape`: (tape, node index, value)."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: Tape, index: int, value: float) -> None:
        self.tape = tape
        self.index = index
        self.value = value

    def __repr__(self) -> str:
        return f"Var(@{self.index}, {self.value!r})"

    # -- arithmetic; the float branches record one-parent nodes so mixed
    #    Var/constant expressions never allocate lift() nodes.

    def __add__(self, other: Real) -> "Var":
        if isinstance(other, Var):
            return self.tape._push(self.value + other.value,
                                   (self.index, other.index), (1.0, 1.0))
        return self.tape._push(self.value + float(other), (self.index,), (1.0,))

    __radd__ = __add__

    def __sub__(self, other: Real) -> "Var":
        if isinstance(other, Var):
            return self.tape._push(self.value - other.value,
                                   (self.index, other.index), (1.0, -1.0))
        return self.tape._push(self.value - float(other), (self.index,), (1.0,))

    def __rsub__(self, other: float) -> "Var":
        return self.tape._push(float(other) - self.value, (self.index,), (-1.0,))

    def __mul__(self, other: Real) -> "Var":
        if isinstance(other, Var):
            return self.tape._push(self.value * other.value,
                                   (self.index, other.index),
                                   (other.value, self.value))
        c = float(other)
        return self.tape._push(self.value * c, (self.index,), (c,))

    __rmul__ = __mul__

    def __truediv__(self, other: Real) -> "Var":
        if isinstance(other, Var):
            if other.value == 0.0:
                raise DomainError("division by zero")
            inv = 1.0 / other.value
            return self.tape._push(self.value * inv,
                                   (self.index, other.index),
                                   (inv, -self.value * inv * inv))
        c = float(other)
        if c == 0.0:
            raise DomainError("division by zero")
        return self.tape._push(self.value / c, (self.index,), (1.0 / c,))

    def __rtruediv__(self, other: float) -> "Var":
        if self.value == 0.0:
            raise DomainError("division by zero")
        c = float(other)
        inv = 1.0 / self.value
        return self.tape._push(c * inv, (self.index,), (-c * inv * inv,))

    def __neg__(self) -> "Var":
        return self.tape._push(-self.value, (self.index,), (-1.0,))

    def __pow__(self, p: float) -> "Var":
        return pow_const(self, p)


# -- stable scalar kernels ---------------------------------------------------

def _softplus(x: float) -> float:
    # x + log1p(exp(-x)) for x > 0 avoids overflow of exp(x)
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def softplus_inverse(y: float) -> float:
    """Solve softplus(x) = y for y > 0 (used to seed positive weights)."""
    if y <= 0.0:
        raise DomainError("softplus_inverse needs y > 0")
    if y > 30.0:
        return y
    return math.log(math.expm1(y))


# -- unary / binary primitives (float or Var) --------------------------------

def exp(x: Real) -> Real:
    if isinstance(x, Var):
        try:
            v = math.exp(x.value)
        except OverflowError:
            raise NonFiniteError(f"exp({x.value}) overflows") from None
        return x.tape._push(v, (x.index,), (v,))
    return math.exp(x)


def log(x: Real) -> Real:
    if isinstance(x, Var):
        if x.value <= 0.0:
            raise DomainError(f"log of non-positive value {x.value}")
        return x.tape._push(math.log(x.value), (x.index,), (1.0 / x.value,))
    if x <= 0.0:
        raise DomainError(f"log of non-positive value {x}")
    return math.log(x)


def tanh(x: Real) -> Real:
    if isinstance(x, Var):
        t = math.tanh(x.value)
        return x.tape._push(t, (x.index,), (1.0 - t * t,))
    return math.tanh(x)


def softplus(x: Real) -> Real:
    if isinstance(x, Var):
        return x.tape._push(_softplus(x.value), (x.index,), (_sigmoid(x.value),))
    return _softplus(x)


def sigmoid(x: Real) -> Real:
    if isinstance(x, Var):
        s = _sigmoid(x.value)
        return x.tape._push(s, (x.index,), (s * (1.0 - s),))
    return _sigmoid(x)


def pow_const(x: Real, p: float) -> Real:
    p = float(p)
    xv = x.value if isinstance(x, Var) else x
    if xv < 0.0 and p != int(p):
        raise DomainError(f"{xv} ** {p} is undefined")
    if xv == 0.0 and p < 1.0:
        raise DomainError(f"derivative of x**{p} undefined at 0")
    if isinstance(x, Var):
        return x.tape._push(xv ** p, (x.index,), (p * xv ** (p - 1.0),))
    return xv ** p


def min_const(x: Real, c: float) -> Real:
    """min(x, c); subgradient 0 on the clamped branch (including ties)."""
    c = float(c)
    if isinstance(x, Var):
        if x.value < c:
            return x.tape._push(x.value, (x.index,), (1.0,))
        return x.tape._push(c, (x.index,), (0.0,))
    return x if x < c else c


def max_const(x: Real, c: float) -> Real:
    """max(x, c); subgradient 0 on the clamped branch (including ties)."""
    c = float(c)
    if isinstance(x, Var):
        if x.value > c:
            return x.tape._push(x.value, (x.index,), (1.0,))
        return x.tape._push(c, (x.index,), (0.0,))
    return x if x > c else c


def relu(x: Real) -> Real:
    return max_const(x, 0.0)


def unary_node(x: Var, value: float, partial: float) -> Var:
    """Attach a custom differentiable unary node (value, d value/d x).

    Extension point for functions outside the primitive menu whose value
    and derivative the caller evaluates itself (e.g. the Gaussian CDF).
    """
    return x.tape._push(value, (x.index,), (partial,))


def affine(weights: Sequence[Real], inputs: Sequence[Real],
           bias: Real | None = None) -> Real:
    """sum_i weights[i] * inputs[i] (+ bias) as a single fused node.

    One k-parent node instead of ~2k add/mul nodes; the dominant op in
    network layers, so graph size stays proportional to unit count.
    """
    total = 0.0
    parents: list[int] = []
    partials: list[float] = []
    tape: Tape | None = None
    for w, z in zip(weights, inputs):
        wv = w.value if isinstance(w, Var) else float(w)
        zv = z.value if isinstance(z, Var) else float(z)
        total += wv * zv
        if isinstance(w, Var):
            tape = w.tape
            parents.append(w.index)
            partials.append(zv)
        if isinstance(z, Var):
            tape = z.tape
            parents.append(z.index)
            partials.append(wv)
    if bias is not None:
        if isinstance(bias, Var):
            tape = bias.tape
            parents.append(bias.index)
            partials.append(1.0)
            total += bias.value
        else:
            total += float(bias)
    if tape is None:
        return total
    return tape._push(total, tuple(parents), tuple(partials))


def vsum(terms: Sequence[Real]) -> Real:
    """Sum a sequence of Vars/floats as one fused node."""
    ones = (1.0,) * len(terms)
    return affine(ones, terms)


# -- backward sweep -----------------------------------------------------------

def backward(root: Var) -> dict[int, float]:
    """Gradient of ``root`` w.r.t. every param leaf, keyed by node index.

    Seeds the root adjoint with 1 and walks the tape once in reverse.
    Adjoint storage is local to the call, so repeated backward passes on
    one tape give identical results.
    """
    tape = root.tape
    n = root.index + 1
    adj = [0.0] * n
    adj[root.index] = 1.0
    parents = tape.parents
    partials = tape.partials
    for i in range(root.index, -1, -1):
        a = adj[i]
        if a == 0.0:
            continue
        ps = parents[i]
        k = len(ps)
        if k == 0:
            continue
        ds = partials[i]
        if k == 1:
            adj[ps[0]] += a * ds[0]
        elif k == 2:
            adj[ps[0]] += a * ds[0]
            adj[ps[1]] += a * ds[1]
        else:
            for p, d in zip(ps, ds):
                adj[p] += a * d
    if not math.isfinite(root.value):
        raise NonFiniteError("root value is not finite")
    out: dict[int, float] = {}
    for ix in tape.param_indices:
        if ix < n:
            g = adj[ix]
            if not math.isfinite(g):
                raise NonFiniteError(f"gradient at leaf {ix} is not finite")
            out[ix] = g
    return out


def gradient(root: Var, params: Sequence[Var]) -> list[float]:
    """Backward pass, ordered like ``params``."""
    g = backward(root)
    return [g.get(p.index, 0.0) for p in params]


def value_of(x: Real) -> float:
    return x.value if isinstance(x, Var) else float(x)

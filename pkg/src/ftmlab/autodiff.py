"""Reverse-mode automatic differentiation on an append-only tape.

The tape records scalar nodes (one arithmetic result per node, local partial
derivatives cached at forward time) plus a small set of fused array nodes
used by dense neural-network layers. Nodes only reference earlier nodes, so
the tape is topologically ordered by construction and backpropagation is a
single reverse sweep.

Scalar code (the position filter recursion, the trajectory cost) is written
with normal Python operators on :class:`Var`; the helper functions ``sqrt``,
``square``, ``sigmoid``, ``max0``, ``norm2sq`` and ``dot2`` accept either a
``Var`` or a plain float, so the same numerical code runs taped (training)
and untaped (validation, evaluation) and produces identical values.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "DomainError",
    "Gradients",
    "Tape",
    "Var",
    "dot2",
    "max0",
    "norm2sq",
    "sigmoid",
    "sqrt",
    "square",
    "TRAJECTORY_GRAPH_NODE_BUDGET",
]

# Node budget for one taped trajectory graph at the default problem size
# (100 time steps, up to 5 measurements per step, two 100-node layers).
# Exceeding it means quadratic growth crept in somewhere.
TRAJECTORY_GRAPH_NODE_BUDGET = 80_000


class DomainError(ValueError):
    """An operation left its numeric domain (division by zero, sqrt of a negative)."""


# Node kinds. _SCALAR nodes use (parents, partials) for the generic reverse
# rule; the array kinds stash an aux tuple in the partials slot instead.
_SCALAR = 0
_DENSE = 1
_SIGARR = 2
_SCALEARR = 3
_ITEM = 4


def _sigmoid_f(x: float) -> float:
    # numerically stable in both tails
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


class Var:
    """Handle to one tape node: the tape plus an index into it."""

    __slots__ = ("t", "i")

    def __init__(self, tape: "Tape", index: int):
        self.t = tape
        self.i = index

    @property
    def value(self):
        return self.t.vals[self.i]

    def __repr__(self):
        return f"Var({self.i}, value={self.t.vals[self.i]!r})"

    # -- scalar arithmetic; second operand may be a Var or a number --------

    def __add__(self, o):
        t = self.t
        if type(o) is Var:
            return t._push(t.vals[self.i] + t.vals[o.i], (self.i, o.i), (1.0, 1.0))
        return t._push(t.vals[self.i] + o, (self.i,), (1.0,))

    __radd__ = __add__

    def __sub__(self, o):
        t = self.t
        if type(o) is Var:
            return t._push(t.vals[self.i] - t.vals[o.i], (self.i, o.i), (1.0, -1.0))
        return t._push(t.vals[self.i] - o, (self.i,), (1.0,))

    def __rsub__(self, o):
        t = self.t
        return t._push(o - t.vals[self.i], (self.i,), (-1.0,))

    def __mul__(self, o):
        t = self.t
        if type(o) is Var:
            a, b = t.vals[self.i], t.vals[o.i]
            return t._push(a * b, (self.i, o.i), (b, a))
        return t._push(t.vals[self.i] * o, (self.i,), (float(o),))

    __rmul__ = __mul__

    def __truediv__(self, o):
        t = self.t
        a = t.vals[self.i]
        if type(o) is Var:
            b = t.vals[o.i]
            if b == 0.0:
                raise DomainError(f"division by zero at node {o.i}")
            inv = 1.0 / b
            return t._push(a * inv, (self.i, o.i), (inv, -a * inv * inv))
        if o == 0.0:
            raise DomainError(f"division of node {self.i} by constant zero")
        inv = 1.0 / o
        return t._push(a * inv, (self.i,), (inv,))

    def __rtruediv__(self, o):
        t = self.t
        b = t.vals[self.i]
        if b == 0.0:
            raise DomainError(f"division by zero at node {self.i}")
        inv = 1.0 / b
        return t._push(o * inv, (self.i,), (-o * inv * inv,))

    def __neg__(self):
        t = self.t
        return t._push(-t.vals[self.i], (self.i,), (-1.0,))


class Gradients:
    """Result of :meth:`Tape.backward`; indexing by Var or node id.

    Nodes not reachable from the backward root read as zero.
    """

    __slots__ = ("_tape", "_g")

    def __init__(self, tape: "Tape", grads: list):
        self._tape = tape
        self._g = grads

    def __getitem__(self, v):
        i = v.i if type(v) is Var else v
        g = self._g[i]
        if g is None:
            val = self._tape.vals[i]
            return np.zeros_like(val) if isinstance(val, np.ndarray) else 0.0
        return g


class Tape:
    """Append-only computation graph; single-writer."""

    __slots__ = ("vals", "parents", "partials", "kind")

    def __init__(self):
        self.vals: list = []
        self.parents: list = []
        self.partials: list = []
        self.kind: list = []

    def __len__(self) -> int:
        return len(self.vals)

    def _push(self, val, parents, partials) -> Var:
        i = len(self.vals)
        self.vals.append(val)
        self.parents.append(parents)
        self.partials.append(partials)
        self.kind.append(_SCALAR)
        return Var(self, i)

    def _push_array(self, val, kind, aux) -> Var:
        i = len(self.vals)
        self.vals.append(val)
        self.parents.append(())
        self.partials.append(aux)
        self.kind.append(kind)
        return Var(self, i)

    # -- leaves -------------------------------------------------------------

    def leaf(self, value: float) -> Var:
        """New scalar leaf (an input the gradient is taken with respect to)."""
        return self._push(float(value), (), ())

    def array_leaf(self, value: np.ndarray) -> Var:
        """New array leaf holding a parameter matrix or vector."""
        return self._push_array(np.asarray(value, dtype=float), _SCALAR, ())

    # -- fused array operations (dense layer fast path) ----------------------

    def dense(self, x, w: Var, b: Var) -> Var:
        """Affine map ``X @ W.T + b`` over a batch of row vectors.

        ``x`` may be a constant ndarray (network input) or a Var holding the
        previous layer's activations; ``w`` is (out, in), ``b`` is (out,).
        """
        if type(x) is Var:
            xv = x.t.vals[x.i]
            aux = (x.i, None, w.i, b.i)
        else:
            xv = np.asarray(x, dtype=float)
            aux = (-1, xv, w.i, b.i)
        out = xv @ self.vals[w.i].T + self.vals[b.i]
        return self._push_array(out, _DENSE, aux)

    def sigmoid_arr(self, z: Var) -> Var:
        zv = self.vals[z.i]
        out = np.empty_like(zv)
        np.negative(np.abs(zv), out=out)
        np.exp(out, out=out)
        e = out
        y = np.where(zv >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
        return self._push_array(y, _SIGARR, (z.i,))

    def scale_arr(self, z: Var, c: float) -> Var:
        return self._push_array(self.vals[z.i] * c, _SCALEARR, (z.i, float(c)))

    def item(self, arr: Var, row: int, col: int) -> Var:
        """Scalar view of one array element, differentiable back into the array."""
        return self._push_array(
            float(self.vals[arr.i][row, col]), _ITEM, (arr.i, row, col)
        )

    # -- reverse sweep -------------------------------------------------------

    def backward(self, root: Var) -> Gradients:
        """Accumulate d(root)/d(node) for every node that feeds the root."""
        if isinstance(self.vals[root.i], np.ndarray):
            raise DomainError("backward root must be a scalar node")
        vals = self.vals
        parents = self.parents
        partials = self.partials
        kind = self.kind
        grads: list = [None] * len(vals)
        grads[root.i] = 1.0
        for i in range(root.i, -1, -1):
            g = grads[i]
            if g is None:
                continue
            k = kind[i]
            if k == _SCALAR:
                ps = parents[i]
                if not ps:
                    continue
                ds = partials[i]
                for j in range(len(ps)):
                    p = ps[j]
                    gp = grads[p]
                    grads[p] = ds[j] * g if gp is None else gp + ds[j] * g
            elif k == _ITEM:
                arr_i, r, c = partials[i]
                ga = grads[arr_i]
                if ga is None:
                    ga = np.zeros_like(vals[arr_i])
                    grads[arr_i] = ga
                ga[r, c] += g
            elif k == _SIGARR:
                (z_i,) = partials[i]
                y = vals[i]
                contrib = g * y * (1.0 - y)
                gz = grads[z_i]
                grads[z_i] = contrib if gz is None else gz + contrib
            elif k == _SCALEARR:
                z_i, c = partials[i]
                contrib = g * c
                gz = grads[z_i]
                grads[z_i] = contrib if gz is None else gz + contrib
            elif k == _DENSE:
                x_i, xc, w_i, b_i = partials[i]
                xv = vals[x_i] if x_i >= 0 else xc
                gw = grads[w_i]
                cw = g.T @ xv
                grads[w_i] = cw if gw is None else gw + cw
                gb = grads[b_i]
                cb = g.sum(axis=0)
                grads[b_i] = cb if gb is None else gb + cb
                if x_i >= 0:
                    gx = grads[x_i]
                    cx = g @ vals[w_i]
                    grads[x_i] = cx if gx is None else gx + cx
        return Gradients(self, grads)


# -- dual-mode scalar functions (Var or float) -------------------------------


def sqrt(x):
    """Square root. Negative arguments raise; the derivative at 0 is taken as 0."""
    if type(x) is Var:
        t = x.t
        v = t.vals[x.i]
        if v < 0.0:
            raise DomainError(f"sqrt of negative value at node {x.i}")
        r = math.sqrt(v)
        d = 0.5 / r if r > 0.0 else 0.0
        return t._push(r, (x.i,), (d,))
    if x < 0.0:
        raise DomainError("sqrt of negative value")
    return math.sqrt(x)


def square(x):
    if type(x) is Var:
        t = x.t
        v = t.vals[x.i]
        return t._push(v * v, (x.i,), (2.0 * v,))
    return x * x


def sigmoid(x):
    if type(x) is Var:
        t = x.t
        y = _sigmoid_f(t.vals[x.i])
        return t._push(y, (x.i,), (y * (1.0 - y),))
    return _sigmoid_f(x)


def max0(x):
    """max(0, x) with subgradient 0 at the kink."""
    if type(x) is Var:
        t = x.t
        v = t.vals[x.i]
        if v > 0.0:
            return t._push(v, (x.i,), (1.0,))
        return t._push(0.0, (x.i,), (0.0,))
    return x if x > 0.0 else 0.0


def norm2sq(x, y):
    """Squared Euclidean norm of the 2-vector (x, y), as a single node."""
    xv = x.t.vals[x.i] if type(x) is Var else x
    yv = y.t.vals[y.i] if type(y) is Var else y
    val = xv * xv + yv * yv
    parents = []
    partials = []
    t = None
    if type(x) is Var:
        t = x.t
        parents.append(x.i)
        partials.append(2.0 * xv)
    if type(y) is Var:
        t = y.t
        parents.append(y.i)
        partials.append(2.0 * yv)
    if t is None:
        return val
    return t._push(val, tuple(parents), tuple(partials))


def dot2(ax, ay, bx, by):
    """Dot product of 2-vectors (ax, ay)·(bx, by), as a single node."""
    axv = ax.t.vals[ax.i] if type(ax) is Var else ax
    ayv = ay.t.vals[ay.i] if type(ay) is Var else ay
    bxv = bx.t.vals[bx.i] if type(bx) is Var else bx
    byv = by.t.vals[by.i] if type(by) is Var else by
    val = axv * bxv + ayv * byv
    parents = []
    partials = []
    t = None
    for v, d in ((ax, bxv), (ay, byv), (bx, axv), (by, ayv)):
        if type(v) is Var:
            t = v.t
            parents.append(v.i)
            partials.append(d)
    if t is None:
        return val
    return t._push(val, tuple(parents), tuple(partials))

"""Reverse-mode differentiation tape with second-order input jets.

The tape records scalar operations applied elementwise to (possibly
batched) array values, in creation order, which is already a topological
order.  A single reverse sweep per output produces the partial derivatives
with respect to every registered leaf.

Residual-style problems need the first and second derivative of a network
output with respect to its scalar input as well.  Those come from jets: a
jet carries (value, d/dt, d2/dt2) as three live tape nodes, propagated
through affine and tanh layers with closed-form rules, so the resulting
residual is still an ordinary tape node and can be differentiated with
respect to the parameters.  Finite differences are used only as a test
oracle, never in a training path.

Tapes are rebuilt on every evaluation; a tape is single-owner while under
construction, and independent evaluations on independent tapes can run in
parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivisionByZero


class Node:
    """One recorded operation: tag, parent nodes, saved operands, value."""

    __slots__ = ("tape", "op", "parents", "payload", "value", "grad", "idx")

    def __init__(self, tape, op, parents, payload, value, idx):
        self.tape = tape
        self.op = op
        self.parents = parents
        self.payload = payload
        self.value = value
        self.grad = None
        self.idx = idx

    # Arithmetic sugar so problem code reads like plain numpy.
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
        return self.tape._push("mulc", (self,), -1.0, -self.value)

    def __repr__(self):
        return f"Node({self.op}, idx={self.idx}, value={self.value!r})"


class Tape:
    """Append-only list of nodes plus the registered parameter leaves."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.leaves: list[Node] = []

    def _push(self, op, parents, payload, value) -> Node:
        node = Node(self, op, parents, payload, value, len(self.nodes))
        self.nodes.append(node)
        return node

    def leaf(self, value) -> Node:
        """Register a parameter leaf; backward reports its partials."""
        node = self._push("leaf", (), None, np.asarray(value, dtype=float))
        self.leaves.append(node)
        return node

    def constant(self, value) -> Node:
        """A value on the tape that no derivative flows into."""
        return self._push("const", (), None, np.asarray(value, dtype=float))


def _tape_of(*operands) -> Tape:
    tape = None
    for a in operands:
        if isinstance(a, Node):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands live on different tapes")
    if tape is None:
        raise ValueError("at least one operand must be a tape node")
    return tape


def add(a, b) -> Node:
    tape = _tape_of(a, b)
    if not isinstance(b, Node):
        return tape._push("addc", (a,), None, a.value + b)
    if not isinstance(a, Node):
        return tape._push("addc", (b,), None, b.value + a)
    return tape._push("add", (a, b), None, a.value + b.value)


def sub(a, b) -> Node:
    tape = _tape_of(a, b)
    if not isinstance(b, Node):
        return tape._push("addc", (a,), None, a.value - b)
    if not isinstance(a, Node):
        return tape._push("subc", (b,), None, a - b.value)
    return tape._push("sub", (a, b), None, a.value - b.value)


def mul(a, b) -> Node:
    tape = _tape_of(a, b)
    if not isinstance(b, Node):
        return tape._push("mulc", (a,), b, a.value * b)
    if not isinstance(a, Node):
        return tape._push("mulc", (b,), a, b.value * a)
    return tape._push("mul", (a, b), (a.value, b.value), a.value * b.value)


def div(a, b) -> Node:
    tape = _tape_of(a, b)
    if isinstance(b, Node):
        if np.any(b.value == 0.0):
            raise DivisionByZero("division by a zero-valued tape node")
        if isinstance(a, Node):
            return tape._push("div", (a, b), (a.value, b.value), a.value / b.value)
        return tape._push("cdiv", (b,), (a, b.value), a / b.value)
    if b == 0.0:
        raise DivisionByZero("division by zero constant")
    return tape._push("mulc", (a,), 1.0 / b, a.value / b)


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    return a.tape._push("tanh", (a,), y, y)


def square(a: Node) -> Node:
    return a.tape._push("square", (a,), a.value, a.value * a.value)


def mean(a: Node) -> Node:
    """Mean over every element; the usual reduction for loss terms."""
    v = np.asarray(a.value)
    return a.tape._push("mean", (a,), (v.shape, v.size), float(v.mean()))


def affine(w: Node, x: Node, b: Node) -> Node:
    """w @ x + b with b broadcast over the trailing batch axis."""
    value = w.value @ x.value + (b.value[:, None] if x.value.ndim == 2 else b.value)
    return w.tape._push("affine", (w, x, b), (w.value, x.value), value)


def matmul(w: Node, x: Node) -> Node:
    if x.op == "const" and not np.any(x.value):
        return w.tape.constant(np.zeros((w.value.shape[0],) + x.value.shape[1:]))
    return w.tape._push("matmul", (w, x), (w.value, x.value), w.value @ x.value)


def lincomb3(a: Node, b: Node, c: Node, ca: float, cb: float, cc: float) -> Node:
    """ca*a + cb*b + cc*c in one node; the residual-assembly shortcut."""
    value = ca * a.value + cb * b.value + cc * c.value
    return a.tape._push("lincomb3", (a, b, c), (ca, cb, cc), value)


def pick(a: Node, row: int, col: int) -> Node:
    """Extract one scalar entry of a 2-d node."""
    return a.tape._push("pick", (a,), (row, col, a.value.shape), float(a.value[row, col]))


def slice_cols(a: Node, start: int, stop: int) -> Node:
    return a.tape._push(
        "slice_cols", (a,), (start, stop, a.value.shape), a.value[:, start:stop]
    )


def input_jet_stacked(tape: Tape, t) -> Node:
    """Seed jet (t, 1, 0) as one stacked constant of shape (3, 1, batch)."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float)).reshape(1, -1)
    return tape.constant(np.stack([t_arr, np.ones_like(t_arr), np.zeros_like(t_arr)]))


def affine_jet_stacked(w: Node, x: Node, b: Node) -> Node:
    """Affine layer on a stacked jet: (W x0 + b, W x1, W x2) in one node."""
    value = w.value @ x.value
    value[0] += b.value[:, None]
    return w.tape._push("affine_j3", (w, x, b), (w.value, x.value), value)


def tanh_jet_stacked(x: Node) -> Node:
    """tanh on a stacked jet; same chain rules as tanh_jet, fused."""
    xv = x.value
    y0 = np.tanh(xv[0])
    s = 1.0 - y0 * y0
    x1v = xv[1]
    value = np.empty_like(xv)
    value[0] = y0
    value[1] = s * x1v
    value[2] = s * xv[2] - 2.0 * y0 * s * x1v * x1v
    return x.tape._push("tanh_j3", (x,), (y0, s, x1v, xv[2]), value)


def jet_combine(x: Node, c_val: float, c_d1: float, c_d2: float) -> Node:
    """Collapse a stacked jet to c_val*u + c_d1*u' + c_d2*u''."""
    xv = x.value
    value = c_val * xv[0] + c_d1 * xv[1] + c_d2 * xv[2]
    return x.tape._push("jetcomb3", (x,), (c_val, c_d1, c_d2), value)


def _tanh_j3_input_grad(adj, payload):
    y0, s, x1v, x2v = payload
    ysx1 = (y0 * s) * x1v
    g = np.empty_like(adj)
    np.multiply(adj[2], s, out=g[2])
    g[1] = adj[1] * s
    g[1] -= (4.0 * ysx1) * adj[2]
    g[0] = adj[0] * s
    g[0] -= (2.0 * ysx1) * adj[1]
    g[0] -= (2.0 * s * (y0 * x2v + (1.0 - 3.0 * y0 * y0) * (x1v * x1v))) * adj[2]
    return g


def _jetcomb3_input_grad(adj, payload):
    c_val, c_d1, c_d2 = payload
    g = np.empty((3,) + adj.shape)
    np.multiply(adj, c_val, out=g[0])
    np.multiply(adj, c_d1, out=g[1])
    np.multiply(adj, c_d2, out=g[2])
    return g


def _sum_outer(adj, xv):
    """sum_a adj[a] @ xv[a].T for stacked (3, r, B) operands, via BLAS."""
    return np.matmul(adj, xv.transpose(0, 2, 1)).sum(axis=0)


def _per_column_outer(adj, xv):
    """out[c] = sum_a outer(adj[a, :, c], xv[a, :, c]), via batched matmul."""
    return np.matmul(adj.transpose(2, 1, 0), xv.transpose(2, 0, 1))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape of the operand it belongs to."""
    g = np.asarray(grad)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _acc(node: Node, contrib):
    if node.op == "const":
        return
    value = node.value
    if isinstance(value, np.ndarray) and np.shape(contrib) != value.shape:
        contrib = _unbroadcast(contrib, value.shape)
    node.grad = contrib if node.grad is None else node.grad + contrib


def backward(tape: Tape, output: Node, seed=1.0) -> list[np.ndarray]:
    """Reverse sweep from `output`; returns partials for every leaf.

    The sweep visits each node at most once.  Leaf gradients are returned
    in leaf-registration order, each shaped like its leaf; leaves the
    output does not depend on get zeros.  Node adjoints are cleared before
    returning, so several sweeps may run on one tape.
    """
    if output.tape is not tape:
        raise ValueError("output does not belong to this tape")
    output.grad = seed
    nodes = tape.nodes
    for i in range(output.idx, -1, -1):
        node = nodes[i]
        adj = node.grad
        if adj is None:
            continue
        op = node.op
        if op == "affine":
            w, x, b = node.parents
            wv, xv = node.payload
            if xv.ndim == 2:
                _acc(w, adj @ xv.T)
                _acc(x, wv.T @ adj)
                _acc(b, adj.sum(axis=1))
            else:
                _acc(w, np.outer(adj, xv))
                _acc(x, wv.T @ adj)
                _acc(b, adj)
        elif op == "matmul":
            w, x = node.parents
            wv, xv = node.payload
            _acc(w, adj @ xv.T if xv.ndim == 2 else np.outer(adj, xv))
            _acc(x, wv.T @ adj)
        elif op == "affine_j3":
            w, x, b = node.parents
            wv, xv = node.payload
            _acc(w, _sum_outer(adj, xv))
            _acc(x, np.matmul(wv.T, adj))
            _acc(b, adj[0].sum(axis=1))
        elif op == "tanh_j3":
            _acc(node.parents[0], _tanh_j3_input_grad(adj, node.payload))
        elif op == "jetcomb3":
            _acc(node.parents[0], _jetcomb3_input_grad(adj, node.payload))
        elif op == "tanh":
            y = node.payload
            _acc(node.parents[0], adj * (1.0 - y * y))
        elif op == "tanh_d1":
            x0, x1 = node.parents
            y0, s, x1v = node.payload
            _acc(x1, adj * s)
            _acc(x0, adj * (-2.0 * y0 * s * x1v))
        elif op == "tanh_d2":
            x0, x1, x2 = node.parents
            y0, s, x1v, x2v = node.payload
            _acc(x2, adj * s)
            _acc(x1, adj * (-4.0 * y0 * s * x1v))
            _acc(x0, adj * (-2.0 * s * (y0 * x2v + (1.0 - 3.0 * y0 * y0) * x1v * x1v)))
        elif op == "mul":
            a, b = node.parents
            av, bv = node.payload
            _acc(a, adj * bv)
            _acc(b, adj * av)
        elif op == "mulc":
            _acc(node.parents[0], adj * node.payload)
        elif op == "add":
            a, b = node.parents
            _acc(a, adj)
            _acc(b, adj)
        elif op == "addc":
            _acc(node.parents[0], adj)
        elif op == "sub":
            a, b = node.parents
            _acc(a, adj)
            _acc(b, -adj)
        elif op == "subc":
            _acc(node.parents[0], -adj)
        elif op == "square":
            _acc(node.parents[0], adj * (2.0 * node.payload))
        elif op == "div":
            a, b = node.parents
            av, bv = node.payload
            _acc(a, adj / bv)
            _acc(b, -adj * av / (bv * bv))
        elif op == "cdiv":
            av, bv = node.payload
            _acc(node.parents[0], -adj * av / (bv * bv))
        elif op == "mean":
            shape, size = node.payload
            _acc(node.parents[0], np.full(shape, adj / size))
        elif op == "lincomb3":
            a, b, c = node.parents
            ca, cb, cc = node.payload
            _acc(a, ca * adj)
            _acc(b, cb * adj)
            _acc(c, cc * adj)
        elif op == "pick":
            row, col, shape = node.payload
            g = np.zeros(shape)
            g[row, col] = adj
            _acc(node.parents[0], g)
        elif op == "slice_cols":
            start, stop, shape = node.payload
            g = np.zeros(shape)
            g[:, start:stop] = adj
            _acc(node.parents[0], g)
        elif op in ("leaf", "const"):
            pass
        else:  # pragma: no cover - new op without a backward rule
            raise RuntimeError(f"no backward rule for op {op!r}")
    grads = [
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        for leaf in tape.leaves
    ]
    grads = [np.broadcast_to(g, leaf.value.shape).astype(float, copy=True)
             if np.shape(g) != leaf.value.shape else np.asarray(g, dtype=float)
             for g, leaf in zip(grads, tape.leaves)]
    for i in range(output.idx, -1, -1):
        nodes[i].grad = None
    return grads


_BATCHED_ELEMENTWISE = {
    "tanh", "tanh_d1", "tanh_d2", "mul", "mulc", "add", "addc",
    "sub", "subc", "square", "lincomb3", "div", "cdiv",
}


def backward_columns(tape: Tape, output: Node) -> list[np.ndarray]:
    """Per-column leaf gradients of a column-diagonal graph, in one sweep.

    For an output valued (rows, B) whose every ancestor op acts columnwise
    over the trailing batch axis (elementwise ops, affine/matmul), column b
    of the output is a function of column b of the inputs and the shared
    leaves.  Seeding every column with adjoint one and keeping the column
    axis separate during leaf accumulation therefore yields the gradient of
    each column's output in a single reverse pass: the result is one array
    of shape (B, *leaf.shape) per leaf, in registration order.

    This is how a whole constraint Jacobian comes out of one sweep instead
    of one sweep per row.
    """
    if output.tape is not tape:
        raise ValueError("output does not belong to this tape")
    out_v = np.asarray(output.value)
    if out_v.ndim != 2:
        raise ValueError("columnwise sweep needs a 2-d output")
    n_cols = out_v.shape[1]
    leaf_grads: dict[int, np.ndarray] = {}

    def acc_leaf(node, contrib):
        key = id(node)
        leaf_grads[key] = contrib if key not in leaf_grads else leaf_grads[key] + contrib

    output.grad = np.ones_like(out_v)
    nodes = tape.nodes
    for i in range(output.idx, -1, -1):
        node = nodes[i]
        adj = node.grad
        if adj is None:
            continue
        op = node.op
        if op == "affine_j3":
            w, x, b = node.parents
            wv, xv = node.payload
            acc_leaf(w, _per_column_outer(adj, xv))
            _acc(x, np.matmul(wv.T, adj))
            acc_leaf(b, adj[0].T)
        elif op == "tanh_j3":
            _acc(node.parents[0], _tanh_j3_input_grad(adj, node.payload))
        elif op == "jetcomb3":
            _acc(node.parents[0], _jetcomb3_input_grad(adj, node.payload))
        elif op == "affine":
            w, x, b = node.parents
            wv, xv = node.payload
            if w.op != "leaf":  # pragma: no cover - parameters are always leaves
                raise ValueError("columnwise sweep expects leaf weights")
            acc_leaf(w, adj.T[:, :, None] * xv.T[:, None, :])
            _acc(x, wv.T @ adj)
            acc_leaf(b, adj.T)
        elif op == "matmul":
            w, x = node.parents
            wv, xv = node.payload
            acc_leaf(w, adj.T[:, :, None] * xv.T[:, None, :])
            _acc(x, wv.T @ adj)
        elif op == "tanh":
            y = node.payload
            _acc(node.parents[0], adj * (1.0 - y * y))
        elif op == "tanh_d1":
            x0, x1 = node.parents
            y0, s, x1v = node.payload
            _acc(x1, adj * s)
            _acc(x0, adj * (-2.0 * y0 * s * x1v))
        elif op == "tanh_d2":
            x0, x1, x2 = node.parents
            y0, s, x1v, x2v = node.payload
            _acc(x2, adj * s)
            _acc(x1, adj * (-4.0 * y0 * s * x1v))
            _acc(x0, adj * (-2.0 * s * (y0 * x2v + (1.0 - 3.0 * y0 * y0) * x1v * x1v)))
        elif op == "lincomb3":
            a, b, c = node.parents
            ca, cb, cc = node.payload
            _acc(a, ca * adj)
            _acc(b, cb * adj)
            _acc(c, cc * adj)
        elif op == "mulc":
            _acc(node.parents[0], adj * node.payload)
        elif op in ("add", "sub"):
            a, b = node.parents
            _acc(a, adj)
            _acc(b, adj if op == "add" else -adj)
        elif op == "addc":
            _acc(node.parents[0], adj)
        elif op == "subc":
            _acc(node.parents[0], -adj)
        elif op == "square":
            _acc(node.parents[0], adj * (2.0 * node.payload))
        elif op == "mul":
            a, b = node.parents
            av, bv = node.payload
            _acc(a, adj * bv)
            _acc(b, adj * av)
        elif op in ("leaf", "const"):
            pass
        else:
            raise ValueError(f"op {op!r} is not columnwise; use backward() per column")
    result = [
        leaf_grads.get(id(leaf), np.zeros((n_cols,) + np.shape(leaf.value)))
        for leaf in tape.leaves
    ]
    for i in range(output.idx, -1, -1):
        nodes[i].grad = None
    return result


@dataclass
class Jet2:
    """Truncated second-order Taylor triple with respect to a scalar input.

    All three components are live nodes on one tape, so anything assembled
    from them (an ODE residual, say) stays differentiable with respect to
    the parameter leaves.
    """

    val: Node
    d1: Node
    d2: Node


def input_jet(tape: Tape, t) -> Jet2:
    """Seed jet for the scalar input itself: (t, 1, 0), batched over t."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float)).reshape(1, -1)
    return Jet2(
        tape.constant(t_arr),
        tape.constant(np.ones_like(t_arr)),
        tape.constant(np.zeros_like(t_arr)),
    )


def affine_jet(w: Node, jet: Jet2, b: Node) -> Jet2:
    """Affine layers act linearly on jets: (W x0 + b, W x1, W x2)."""
    return Jet2(affine(w, jet.val, b), matmul(w, jet.d1), matmul(w, jet.d2))


def tanh_jet(jet: Jet2) -> Jet2:
    """Chain rule for y = tanh(x) through second order.

    y1 = (1 - y0^2) x1 and y2 = (1 - y0^2) x2 - 2 y0 (1 - y0^2) x1^2,
    recorded as dedicated nodes with closed-form parameter partials.
    """
    tape = jet.val.tape
    x0, x1, x2 = jet.val, jet.d1, jet.d2
    y0v = np.tanh(x0.value)
    sv = 1.0 - y0v * y0v
    y0 = tape._push("tanh", (x0,), y0v, y0v)
    y1 = tape._push("tanh_d1", (x0, x1), (y0v, sv, x1.value), sv * x1.value)
    y2v = sv * x2.value - 2.0 * y0v * sv * x1.value * x1.value
    y2 = tape._push("tanh_d2", (x0, x1, x2), (y0v, sv, x1.value, x2.value), y2v)
    return Jet2(y0, y1, y2)


def jet_propagate(forward_fn, tape: Tape, t) -> Jet2:
    """Run a jet through a network forward function.

    `forward_fn(tape, jet) -> jet` maps the seeded input jet (t, 1, 0) to
    the output jet (u, u', u'') for a network with one input.
    """
    return forward_fn(tape, input_jet(tape, t))


class ValueJet:
    """Plain-number second-order jet for closed-form expressions.

    Used as the plug-in oracle for analytic solutions (no tape, no
    parameters): carries (value, d/dt, d2/dt2) through +, *, exp, cos.
    """

    __slots__ = ("val", "d1", "d2")

    def __init__(self, val: float, d1: float = 0.0, d2: float = 0.0):
        self.val = val
        self.d1 = d1
        self.d2 = d2

    def __add__(self, other):
        if isinstance(other, ValueJet):
            return ValueJet(self.val + other.val, self.d1 + other.d1, self.d2 + other.d2)
        return ValueJet(self.val + other, self.d1, self.d2)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, ValueJet):
            return ValueJet(
                self.val * other.val,
                self.d1 * other.val + self.val * other.d1,
                self.d2 * other.val + 2.0 * self.d1 * other.d1 + self.val * other.d2,
            )
        return ValueJet(self.val * other, self.d1 * other, self.d2 * other)

    __rmul__ = __mul__

    def _lift(self, f0: float, f1: float, f2: float) -> "ValueJet":
        # Faa di Bruno through second order for a scalar function f.
        return ValueJet(f0, f1 * self.d1, f1 * self.d2 + f2 * self.d1 * self.d1)

    def exp(self) -> "ValueJet":
        e = math.exp(self.val)
        return self._lift(e, e, e)

    def cos(self) -> "ValueJet":
        c, s = math.cos(self.val), math.sin(self.val)
        return self._lift(c, -s, -c)

"""Scalar computation tape with forward spatial tangents and reverse-mode sweeps.

The tape records scalar expressions in two input coordinates (x, y) plus any
number of scalar parameters.  Each recorded node carries, besides its value,
two *tangent* channels holding d(node)/dx and d(node)/dy.  The tangent
arithmetic is itself recorded as ordinary nodes, so a reverse sweep over any
node built from tangents yields exact parameter derivatives of spatial
derivatives (mixed second order).

Node values may be plain floats or 1-D numpy arrays.  An array value means
the same scalar expression evaluated at a batch of points simultaneously;
the recorded graph structure is identical either way.  Parameter and
constant leaves stay scalar, input leaves may be batched, and adjoints are
sum-reduced across the batch axis when they reach a scalar leaf.

A graph is single-writer: do not record onto one graph from several threads.
Independent graphs over disjoint batches may run concurrently and their
gradient vectors summed.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = ["AutodiffError", "NodeRef", "ScalarGraph", "OPS"]

# Operations accepted by ScalarGraph.apply.  'scale' takes one parent and a
# float constant.
OPS = ("add", "sub", "mul", "div", "neg", "tanh", "sin", "cos", "square", "scale")

_LEAF_OPS = ("input", "param", "const")

# Sentinel tangent index: tangent channel was not propagated for this node.
_NO_TANGENT = -1


class AutodiffError(RuntimeError):
    """Invalid recording or sweep: bad ref, division by zero, non-finite value."""


class NodeRef(NamedTuple):
    """Handle to a node of a ScalarGraph.

    Valid until the owning graph is reset; a stale ref raises on use.
    """

    index: int
    generation: int


class ScalarGraph:
    """Append-only tape of scalar operations with recorded tangent arithmetic."""

    def __init__(self):
        self._gen = 0
        self.last_sweep_visits = 0
        self._init_storage()

    def _init_storage(self):
        self._ops: list[str] = []
        self._parents: list[tuple[int, ...]] = []
        self._partials: list[tuple] = []
        self._values: list = []
        # (tx, ty) node indices, or _NO_TANGENT entries for unpropagated channels
        self._tangents: list[tuple[int, int]] = []
        self._param_ids: list[int] = []
        self._zero_id = self._append_leaf("const", 0.0)
        self._one_id = self._append_leaf("const", 1.0)

    # -- basic bookkeeping -------------------------------------------------

    def __len__(self):
        return len(self._ops)

    @property
    def n_params(self) -> int:
        return len(self._param_ids)

    def reset(self):
        """Drop all nodes.  Every NodeRef issued so far becomes invalid."""
        self._gen += 1
        self._init_storage()

    def _check(self, ref: NodeRef) -> int:
        if ref.generation != self._gen or not (0 <= ref.index < len(self._ops)):
            raise AutodiffError(f"stale or foreign NodeRef {ref}")
        return ref.index

    def _ref(self, idx: int) -> NodeRef:
        return NodeRef(idx, self._gen)

    def value(self, ref: NodeRef):
        """Value of a node: float, or 1-D array for batched evaluation."""
        return self._values[self._check(ref)]

    def tangent_value(self, ref: NodeRef):
        """(d/dx, d/dy) values of a node, read off its tangent channels."""
        tx, ty = self._tangents[self._check(ref)]
        if tx == _NO_TANGENT or ty == _NO_TANGENT:
            raise AutodiffError("tangent channel was not propagated for this node")
        return self._values[tx], self._values[ty]

    # -- recording ---------------------------------------------------------

    def _coerce(self, value):
        if isinstance(value, (float, int)):
            return float(value)
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            return float(arr)
        if arr.ndim != 1:
            raise AutodiffError("node values must be scalars or 1-D arrays")
        return arr

    def _append_leaf(self, kind: str, value) -> int:
        value = self._coerce(value)
        self._ensure_finite(value, kind, ())
        self._ops.append(kind)
        self._parents.append(())
        self._partials.append(())
        self._values.append(value)
        self._tangents.append((_NO_TANGENT, _NO_TANGENT))
        return len(self._ops) - 1

    def _ensure_finite(self, value, op: str, parents: tuple[int, ...]):
        if not np.all(np.isfinite(value)):
            raise AutodiffError(
                f"non-finite value while recording '{op}' "
                f"(node {len(self._ops)}, parents {parents})"
            )

    def lift_input(self, coordinate_index: int, value) -> NodeRef:
        """Input leaf seeded with the standard basis tangent e_coordinate_index."""
        if coordinate_index not in (0, 1):
            raise AutodiffError("coordinate_index must be 0 or 1")
        idx = self._append_leaf("input", value)
        seed = (self._one_id, self._zero_id) if coordinate_index == 0 else (self._zero_id, self._one_id)
        self._tangents[idx] = seed
        return self._ref(idx)

    def lift_parameter(self, value: float) -> NodeRef:
        """Scalar parameter leaf; zero tangent; registered for reverse sweeps."""
        value = self._coerce(value)
        if np.ndim(value) != 0:
            raise AutodiffError("parameters must be scalar")
        idx = self._append_leaf("param", value)
        self._tangents[idx] = (self._zero_id, self._zero_id)
        self._param_ids.append(idx)
        return self._ref(idx)

    def lift_constant(self, value) -> NodeRef:
        """Constant leaf (scalar or batched); zero tangent; no adjoint."""
        idx = self._append_leaf("const", value)
        self._tangents[idx] = (self._zero_id, self._zero_id)
        return self._ref(idx)

    def _raw(self, op: str, parent_ids: tuple[int, ...], partials: tuple, value) -> int:
        """Append a node without tangent propagation (used for tangent arithmetic)."""
        self._ensure_finite(value, op, parent_ids)
        self._ops.append(op)
        self._parents.append(parent_ids)
        self._partials.append(partials)
        self._values.append(value)
        self._tangents.append((_NO_TANGENT, _NO_TANGENT))
        return len(self._ops) - 1

    # Tangent-arithmetic helpers; all skip work when an operand is the cached
    # zero node so parameter-heavy expressions stay compact.

    def _t_add(self, a: int, b: int) -> int:
        if a == self._zero_id:
            return b
        if b == self._zero_id:
            return a
        return self._raw("add", (a, b), (1.0, 1.0), self._values[a] + self._values[b])

    def _t_sub(self, a: int, b: int) -> int:
        if b == self._zero_id:
            return a
        if a == self._zero_id:
            return self._raw("neg", (b,), (-1.0,), -self._values[b])
        return self._raw("sub", (a, b), (1.0, -1.0), self._values[a] - self._values[b])

    def _t_mul(self, a: int, b: int) -> int:
        if a == self._zero_id or b == self._zero_id:
            return self._zero_id
        if a == self._one_id:
            return b
        if b == self._one_id:
            return a
        va, vb = self._values[a], self._values[b]
        return self._raw("mul", (a, b), (vb, va), va * vb)

    def _t_scale(self, a: int, c: float) -> int:
        if a == self._zero_id or c == 0.0:
            return self._zero_id
        if c == 1.0:
            return a
        return self._raw("scale", (a,), (c,), c * self._values[a])

    def apply(self, op: str, *parents: NodeRef, const: float | None = None) -> NodeRef:
        """Record one operation; value, local partials and tangents are stored.

        The tangent channels of the result are themselves graph nodes, so a
        later reverse sweep differentiates through them.  Division by zero at
        record time raises; so does any non-finite result.
        """
        ids = tuple(self._check(p) for p in parents)
        vals = tuple(self._values[i] for i in ids)

        if op == "add":
            a, b = vals
            idx = self._raw(op, ids, (1.0, 1.0), a + b)
        elif op == "sub":
            a, b = vals
            idx = self._raw(op, ids, (1.0, -1.0), a - b)
        elif op == "mul":
            a, b = vals
            idx = self._raw(op, ids, (b, a), a * b)
        elif op == "div":
            a, b = vals
            if np.any(b == 0.0):
                raise AutodiffError("division by zero at record time")
            v = a / b
            idx = self._raw(op, ids, (1.0 / b, -v / b), v)
        elif op == "neg":
            (a,) = vals
            idx = self._raw(op, ids, (-1.0,), -a)
        elif op == "tanh":
            (a,) = vals
            v = np.tanh(a)
            idx = self._raw(op, ids, (1.0 - v * v,), v)
        elif op == "sin":
            (a,) = vals
            idx = self._raw(op, ids, (np.cos(a),), np.sin(a))
        elif op == "cos":
            (a,) = vals
            idx = self._raw(op, ids, (-np.sin(a),), np.cos(a))
        elif op == "square":
            (a,) = vals
            idx = self._raw(op, ids, (2.0 * a,), a * a)
        elif op == "scale":
            if const is None:
                raise AutodiffError("'scale' requires const=")
            (a,) = vals
            idx = self._raw(op, ids, (float(const),), float(const) * a)
        else:
            raise AutodiffError(f"unknown operation '{op}'")

        self._tangents[idx] = self._propagate_tangent(op, ids, idx, const)
        return self._ref(idx)

    def _propagate_tangent(self, op, ids, idx, const):
        tangents = [self._tangents[i] for i in ids]
        if any(_NO_TANGENT in t for t in tangents):
            return (_NO_TANGENT, _NO_TANGENT)
        if all(t == (self._zero_id, self._zero_id) for t in tangents):
            return (self._zero_id, self._zero_id)

        out = []
        shared = None
        for c in (0, 1):
            ts = [t[c] for t in tangents]
            if op == "add":
                out.append(self._t_add(ts[0], ts[1]))
            elif op == "sub":
                out.append(self._t_sub(ts[0], ts[1]))
            elif op == "mul":
                a, b = ids
                out.append(self._t_add(self._t_mul(ts[0], b), self._t_mul(a, ts[1])))
            elif op == "div":
                # d(a/b) = (ta - (a/b)*tb) / b
                b = ids[1]
                num = self._t_sub(ts[0], self._t_mul(idx, ts[1]))
                if num == self._zero_id:
                    out.append(self._zero_id)
                else:
                    vb = self._values[b]
                    vn = self._values[num]
                    out.append(self._raw("div", (num, b), (1.0 / vb, -(vn / vb) / vb), vn / vb))
            elif op == "neg":
                out.append(self._zero_id if ts[0] == self._zero_id
                           else self._raw("neg", (ts[0],), (-1.0,), -self._values[ts[0]]))
            elif op == "tanh":
                if ts[0] == self._zero_id:
                    out.append(self._zero_id)
                    continue
                if shared is None:
                    s = self._raw("square", (idx,), (2.0 * self._values[idx],),
                                  self._values[idx] ** 2)
                    shared = self._raw("sub", (self._one_id, s), (1.0, -1.0),
                                       1.0 - self._values[s])
                out.append(self._t_mul(shared, ts[0]))
            elif op == "sin":
                if ts[0] == self._zero_id:
                    out.append(self._zero_id)
                    continue
                if shared is None:
                    va = self._values[ids[0]]
                    shared = self._raw("cos", ids, (-np.sin(va),), np.cos(va))
                out.append(self._t_mul(shared, ts[0]))
            elif op == "cos":
                if ts[0] == self._zero_id:
                    out.append(self._zero_id)
                    continue
                if shared is None:
                    va = self._values[ids[0]]
                    s = self._raw("sin", ids, (np.cos(va),), np.sin(va))
                    shared = self._raw("neg", (s,), (-1.0,), -self._values[s])
                out.append(self._t_mul(shared, ts[0]))
            elif op == "square":
                out.append(self._t_scale(self._t_mul(ids[0], ts[0]), 2.0))
            elif op == "scale":
                out.append(self._t_scale(ts[0], float(const)))
        return tuple(out)

    # Thin spellings used throughout the loss assembly.

    def add(self, a, b):
        return self.apply("add", a, b)

    def sub(self, a, b):
        return self.apply("sub", a, b)

    def mul(self, a, b):
        return self.apply("mul", a, b)

    def div(self, a, b):
        return self.apply("div", a, b)

    def neg(self, a):
        return self.apply("neg", a)

    def tanh(self, a):
        return self.apply("tanh", a)

    def sin(self, a):
        return self.apply("sin", a)

    def cos(self, a):
        return self.apply("cos", a)

    def square(self, a):
        return self.apply("square", a)

    def scale(self, a, const: float):
        return self.apply("scale", a, const=const)

    def mean(self, ref: NodeRef) -> NodeRef:
        """Mean over the batch axis of an array-valued node (scalar-valued result).

        For a scalar node this is the identity.  The adjoint distributes
        uniformly over the batch, which realises the 1/N averaging of
        collocation sums.
        """
        idx = self._check(ref)
        v = self._values[idx]
        if np.ndim(v) == 0:
            return ref
        n = v.shape[0]
        out = self._raw("bmean", (idx,), (1.0 / n,), float(np.mean(v)))
        self._tangents[out] = (_NO_TANGENT, _NO_TANGENT)
        return self._ref(out)

    def tangent_node(self, ref: NodeRef, coordinate_index: int) -> NodeRef:
        """Graph node whose value is d(ref)/d(coordinate); differentiable in parameters."""
        if coordinate_index not in (0, 1):
            raise AutodiffError("coordinate_index must be 0 or 1")
        t = self._tangents[self._check(ref)][coordinate_index]
        if t == _NO_TANGENT:
            raise AutodiffError("tangent channel was not propagated for this node")
        return self._ref(t)

    # -- reverse sweep -------------------------------------------------------

    def reverse_sweep(self, root: NodeRef) -> np.ndarray:
        """d(root)/d(parameters), one backward pass in reverse topological order.

        The root must be scalar-valued.  Returns a vector ordered by parameter
        registration order.  Each node at or below the root is visited exactly
        once; the visit count is left in `last_sweep_visits`.
        """
        r = self._check(root)
        if np.ndim(self._values[r]) != 0:
            raise AutodiffError("reverse_sweep root must be scalar-valued (use mean())")

        adj: list = [None] * (r + 1)
        adj[r] = 1.0
        visits = 0
        ops, parents, partials, values = self._ops, self._parents, self._partials, self._values
        for k in range(r, -1, -1):
            visits += 1
            a = adj[k]
            if a is None:
                continue
            for p, d in zip(parents[k], partials[k]):
                contrib = a * d
                if np.ndim(values[p]) == 0 and np.ndim(contrib) != 0:
                    contrib = float(np.sum(contrib))
                if adj[p] is None:
                    adj[p] = contrib
                else:
                    adj[p] = adj[p] + contrib
        self.last_sweep_visits = visits

        grad = np.zeros(len(self._param_ids))
        for i, pid in enumerate(self._param_ids):
            if pid <= r and adj[pid] is not None:
                grad[i] = adj[pid]
        if not np.all(np.isfinite(grad)):
            raise AutodiffError("non-finite parameter gradient in reverse sweep")
        return grad

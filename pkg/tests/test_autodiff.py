"""Tape correctness: seeds, recorded tangents, reverse sweeps, failure policy.

Gradient and tangent oracles are central finite differences of re-recorded
expressions (values only, no adjoints), so the checks are independent of the
sweep under test.
"""

import numpy as np
import pytest

from elastobound.autodiff import AutodiffError, ScalarGraph

FD_STEP = 1e-6


def test_input_leaf_seeds():
    g = ScalarGraph()
    x = g.lift_input(0, 0.5)
    assert g.value(x) == 0.5
    assert g.tangent_value(x) == (1.0, 0.0)
    y = g.lift_input(1, 0.0)
    assert g.value(y) == 0.0
    assert g.tangent_value(y) == (0.0, 1.0)


def test_product_rule_tangent():
    g = ScalarGraph()
    x = g.lift_input(0, 2.0)
    y = g.lift_input(1, 3.0)
    f = g.mul(x, y)
    assert g.value(f) == 6.0
    assert g.tangent_value(f) == (3.0, 2.0)


def test_parameter_leaf_and_gradients():
    g = ScalarGraph()
    p = g.lift_parameter(1.5)
    assert g.value(p) == 1.5
    assert g.tangent_value(p) == (0.0, 0.0)

    g = ScalarGraph()
    x = g.lift_input(0, 2.0)
    p = g.lift_parameter(1.5)
    assert g.reverse_sweep(g.mul(p, x)) == pytest.approx([2.0])

    g = ScalarGraph()
    p = g.lift_parameter(3.0)
    assert g.reverse_sweep(g.square(p)) == pytest.approx([6.0])


def test_elementary_values_and_partials():
    g = ScalarGraph()
    x = g.lift_input(0, 0.0)
    t = g.tanh(x)
    assert g.value(t) == 0.0
    assert g.tangent_value(t)[0] == 1.0  # tanh'(0) = 1

    g = ScalarGraph()
    x = g.lift_input(0, np.pi / 2)
    s = g.sin(x)
    assert g.value(s) == pytest.approx(1.0)
    assert g.tangent_value(s)[0] == pytest.approx(np.cos(np.pi / 2))

    g = ScalarGraph()
    x = g.lift_input(0, 3.0)
    sq = g.square(x)
    assert g.value(sq) == 9.0
    assert g.tangent_value(sq) == (6.0, 0.0)


def test_tangent_node_values():
    g = ScalarGraph()
    x = g.lift_input(0, 3.0)
    f = g.square(x)
    assert g.value(g.tangent_node(f, 0)) == 6.0

    g = ScalarGraph()
    x = g.lift_input(0, np.pi)
    y = g.lift_input(1, 2.0)
    f = g.mul(g.sin(x), y)
    assert g.value(g.tangent_node(f, 0)) == pytest.approx(2 * np.cos(np.pi))
    assert g.value(g.tangent_node(f, 1)) == pytest.approx(np.sin(np.pi), abs=1e-15)


def test_mixed_second_order_of_linear_term():
    g = ScalarGraph()
    x = g.lift_input(0, 2.0)
    p = g.lift_parameter(1.3)
    f = g.mul(p, x)
    assert g.reverse_sweep(g.tangent_node(f, 0)) == pytest.approx([1.0])


def test_reverse_sweep_linearity_and_tanh():
    g = ScalarGraph()
    p1, p2 = g.lift_parameter(0.3), g.lift_parameter(-2.0)
    assert g.reverse_sweep(g.add(p1, p2)) == pytest.approx([1.0, 1.0])

    g = ScalarGraph()
    p = g.lift_parameter(0.0)
    assert g.reverse_sweep(g.tanh(p)) == pytest.approx([1.0])


def test_mixed_second_order_vs_fd():
    def tangent_value(pv):
        g = ScalarGraph()
        x = g.lift_input(0, 0.7)
        p = g.lift_parameter(pv)
        f = g.mul(p, g.tanh(x))
        return g.value(g.tangent_node(f, 0))

    g = ScalarGraph()
    x = g.lift_input(0, 0.7)
    p = g.lift_parameter(1.3)
    f = g.mul(p, g.tanh(x))
    ad = g.reverse_sweep(g.tangent_node(f, 0))[0]
    fd = (tangent_value(1.3 + FD_STEP) - tangent_value(1.3 - FD_STEP)) / (2 * FD_STEP)
    assert abs(ad - fd) / max(abs(fd), 1e-8) <= 1e-5


# -- randomized expression properties ------------------------------------

_UNARY = ("neg", "tanh", "sin", "cos", "square")
_BINARY = ("add", "sub", "mul", "div")


def _random_program(rng, n_params, n_ops):
    """Instruction list for a random expression over x, y and parameters."""
    prog = []
    n_leaves = 2 + n_params
    avail = n_leaves
    for _ in range(n_ops):
        if rng.random() < 0.55:
            op = _BINARY[rng.integers(len(_BINARY))]
            prog.append((op, int(rng.integers(avail)), int(rng.integers(avail))))
        elif rng.random() < 0.85:
            op = _UNARY[rng.integers(len(_UNARY))]
            prog.append((op, int(rng.integers(avail)), None))
        else:
            prog.append(("scale", int(rng.integers(avail)),
                         float(rng.uniform(-2, 2))))
        avail += 1
    return prog


def _run_program(prog, n_params, xv, yv, theta):
    """Record the program on a fresh tape; returns (graph, root)."""
    g = ScalarGraph()
    nodes = [g.lift_input(0, xv), g.lift_input(1, yv)]
    nodes += [g.lift_parameter(t) for t in theta]
    for op, a, b in prog:
        if op == "scale":
            nodes.append(g.scale(nodes[a], b))
        elif op in _BINARY:
            if op == "div":
                # keep the denominator away from zero
                den = g.add(g.square(nodes[b]), g.scale(nodes[0], 0.0))
                den = g.add(den, g.lift_constant(0.5))
                nodes.append(g.div(nodes[a], den))
            else:
                nodes.append(getattr(g, op)(nodes[a], nodes[b]))
        else:
            nodes.append(getattr(g, op)(nodes[a]))
    return g, nodes[-1]


def test_random_expressions_match_finite_differences():
    rng = np.random.default_rng(1234)
    n_params = 4
    checked = 0
    for _ in range(100):
        prog = _random_program(rng, n_params, int(rng.integers(4, 12)))
        xv, yv = rng.uniform(-1.2, 1.2, size=2)
        theta = rng.uniform(-1.2, 1.2, size=n_params)
        g, root = _run_program(prog, n_params, xv, yv, theta)
        grad = g.reverse_sweep(root)
        tx, ty = g.tangent_value(root)

        def value(xx=xv, yy=yv, th=theta):
            gg, rr = _run_program(prog, n_params, xx, yy, th)
            return gg.value(rr)

        # parameter gradients
        for i in range(n_params):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += FD_STEP
            tm[i] -= FD_STEP
            fd = (value(th=tp) - value(th=tm)) / (2 * FD_STEP)
            if abs(fd) > 1e-3:
                assert abs(grad[i] - fd) / abs(fd) <= 1e-5
                checked += 1
        # spatial tangents
        fdx = (value(xx=xv + FD_STEP) - value(xx=xv - FD_STEP)) / (2 * FD_STEP)
        fdy = (value(yy=yv + FD_STEP) - value(yy=yv - FD_STEP)) / (2 * FD_STEP)
        if abs(fdx) > 1e-3:
            assert abs(tx - fdx) / abs(fdx) <= 1e-5
        if abs(fdy) > 1e-3:
            assert abs(ty - fdy) / abs(fdy) <= 1e-5
    assert checked > 100  # the rejection filter must leave a real sample


def test_random_expressions_second_order_vs_fd():
    rng = np.random.default_rng(99)
    n_params = 3
    checked = 0
    for _ in range(200):
        prog = _random_program(rng, n_params, int(rng.integers(4, 10)))
        xv, yv = rng.uniform(-1.0, 1.0, size=2)
        theta = rng.uniform(-1.0, 1.0, size=n_params)

        def tangent(th):
            gg, rr = _run_program(prog, n_params, xv, yv, th)
            return gg.tangent_value(rr)[0]

        g, root = _run_program(prog, n_params, xv, yv, theta)
        grad_t = g.reverse_sweep(g.tangent_node(root, 0))
        for i in range(n_params):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += FD_STEP
            tm[i] -= FD_STEP
            fd = (tangent(tp) - tangent(tm)) / (2 * FD_STEP)
            if abs(fd) > 1e-3:
                assert abs(grad_t[i] - fd) / abs(fd) <= 1e-4
                checked += 1
    assert checked > 30


def test_batched_values_match_per_point_recording():
    rng = np.random.default_rng(7)
    prog = _random_program(rng, 3, 10)
    theta = rng.uniform(-1, 1, size=3)
    xs = rng.uniform(-1, 1, size=6)
    ys = rng.uniform(-1, 1, size=6)

    g = ScalarGraph()
    nodes = [g.lift_input(0, xs), g.lift_input(1, ys)]
    nodes += [g.lift_parameter(t) for t in theta]
    for op, a, b in prog:
        if op == "scale":
            nodes.append(g.scale(nodes[a], b))
        elif op == "div":
            den = g.add(g.square(nodes[b]), g.scale(nodes[0], 0.0))
            den = g.add(den, g.lift_constant(0.5))
            nodes.append(g.div(nodes[a], den))
        elif op in _BINARY:
            nodes.append(getattr(g, op)(nodes[a], nodes[b]))
        else:
            nodes.append(getattr(g, op)(nodes[a]))
    batched = g.value(nodes[-1])
    grad_batched = g.reverse_sweep(g.mean(g.square(nodes[-1])))

    grad_sum = np.zeros(3)
    for k in range(6):
        gk, rk = _run_program(prog, 3, xs[k], ys[k], theta)
        assert gk.value(rk) == pytest.approx(batched[k], rel=1e-14, abs=1e-14)
        grad_sum += gk.reverse_sweep(gk.square(rk))
    assert grad_batched == pytest.approx(grad_sum / 6, rel=1e-12, abs=1e-14)


def test_reverse_sweep_touches_each_node_once():
    # parameter/constant expressions carry zero tangents, so no tangent
    # arithmetic trails the root and the root is the final node
    g = ScalarGraph()
    c = g.lift_constant(0.3)
    p = g.lift_parameter(0.5)
    root = g.square(g.mul(p, g.tanh(g.mul(p, c))))
    g.reverse_sweep(root)
    assert g.last_sweep_visits == len(g)

    # with input leaves, recorded tangent arithmetic may follow the root;
    # the sweep still visits each node at or below the root exactly once
    g = ScalarGraph()
    x = g.lift_input(0, 0.3)
    p = g.lift_parameter(0.5)
    root = g.square(g.mul(p, g.tanh(g.mul(p, x))))
    g.reverse_sweep(root)
    assert g.last_sweep_visits == root.index + 1
    assert g.last_sweep_visits <= len(g)


def test_division_by_zero_raises_at_record_time():
    g = ScalarGraph()
    a = g.lift_constant(1.0)
    b = g.lift_constant(0.0)
    with pytest.raises(AutodiffError, match="division by zero"):
        g.div(a, b)
    # batched: any zero entry counts
    g = ScalarGraph()
    a = g.lift_constant(np.array([1.0, 1.0]))
    b = g.lift_constant(np.array([2.0, 0.0]))
    with pytest.raises(AutodiffError, match="division by zero"):
        g.div(a, b)


def test_non_finite_value_raises_with_diagnostic():
    g = ScalarGraph()
    big = g.lift_constant(1e308)
    with pytest.raises(AutodiffError, match="non-finite"):
        g.square(big)


def test_noderef_dangles_after_reset():
    g = ScalarGraph()
    x = g.lift_input(0, 1.0)
    g.reset()
    with pytest.raises(AutodiffError, match="stale"):
        g.value(x)
    # fresh refs on the reset graph work
    y = g.lift_input(1, 2.0)
    assert g.value(y) == 2.0

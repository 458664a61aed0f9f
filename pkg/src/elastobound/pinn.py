"""Six-term collocation loss and full-batch Adam training of the mixed solution.

The loss follows the benchmark's componentwise boundary table rather than a
generic full-vector boundary misfit: each side constrains specific
displacement components (Dirichlet bucket) and specific stress components
(Neumann bucket).  Interior terms are the momentum residual, the
constitutive mismatch weighted by eta, and, in regression mode (alpha = 1),
plain data misfits of displacements and stresses against the exact fields.

Two equivalent evaluation routes exist: `assemble_loss` records the whole
objective on a ScalarGraph (reference route, used by tests and gradient
checks), while `train` runs the stacked numpy engine (fast route).  The test
suite pins both loss values and gradients of the two routes against each
other.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import engine
from .autodiff import NodeRef, ScalarGraph
from .elasticity import ManufacturedProblem, SIDES, side_points
from .network import MixedSolution

__all__ = [
    "CollocationSet",
    "LossConfig",
    "TrainConfig",
    "LossBreakdown",
    "AssembledLoss",
    "HistoryRow",
    "TrainResult",
    "make_collocation",
    "assemble_loss",
    "prepare_problem_data",
    "train",
]

log = logging.getLogger(__name__)

_QTY_TO_NET = {"u_x": engine.UX, "u_y": engine.UY,
               "sigma_xx": engine.SXX, "sigma_yy": engine.SYY,
               "sigma_xy": engine.SXY}


@dataclass(frozen=True)
class CollocationSet:
    """Uniform interior grid plus per-side uniform boundary grids.

    interior is (n^2, 2) strictly inside the square, y varying fastest;
    boundary maps each side name to an (n_boundary, 2) array lying exactly
    on that side, endpoints included.
    """

    interior: np.ndarray
    boundary: dict[str, np.ndarray]

    @property
    def n_interior_points(self) -> int:
        return self.interior.shape[0]


def make_collocation(n_interior: int, n_boundary: int) -> CollocationSet:
    """Deterministic grids: n_interior^2 inner points, n_boundary per side."""
    if n_interior < 2 or n_boundary < 2:
        raise ValueError("need n_interior >= 2 and n_boundary >= 2")
    coords = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    xx, yy = np.meshgrid(coords, coords, indexing="ij")  # y fastest
    interior = np.column_stack([xx.ravel(), yy.ravel()])
    boundary = {}
    for side in SIDES:
        bx, by = side_points(side, n_boundary)
        boundary[side] = np.column_stack([bx, by])
    return CollocationSet(interior, boundary)


@dataclass(frozen=True)
class LossConfig:
    """eta weights the constitutive penalty; alpha switches the data terms."""

    eta: float = 0.01
    alpha: int = 0

    def __post_init__(self):
        if self.eta < 0.0:
            raise ValueError("eta must be >= 0")
        if self.alpha not in (0, 1):
            raise ValueError("alpha must be 0 or 1")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    epochs: int = 20000
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.learning_rate <= 0.0 or self.epochs < 1 or self.log_every < 1:
            raise ValueError("learning_rate > 0, epochs >= 1, log_every >= 1 required")


@dataclass(frozen=True)
class LossBreakdown:
    """The six loss terms and the weighted total they sum to."""

    mse_gamma_d: float
    mse_f: float
    mse_gamma_n: float
    mse_c: float
    mse_u: float
    mse_sigma: float
    total: float

    @classmethod
    def from_terms(cls, terms: engine.LossTerms, eta: float, alpha: int):
        return cls(terms.gamma_d, terms.f, terms.gamma_n, terms.c,
                   terms.u, terms.sigma, terms.total(eta, alpha))


class AssembledLoss(NamedTuple):
    root: NodeRef
    breakdown: LossBreakdown


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    seconds: float
    loss: LossBreakdown


@dataclass
class TrainResult:
    solution: MixedSolution
    history: list[HistoryRow]
    aborted: bool = False
    abort_reason: str | None = None


def prepare_problem_data(coll: CollocationSet, p: ManufacturedProblem,
                         cfg: LossConfig) -> engine.ProblemData:
    """Precompute every array the loss needs for this collocation set."""
    xs, ys = coll.interior[:, 0], coll.interior[:, 1]
    fx, fy = p.body_force(xs, ys)
    targets = None
    if cfg.alpha:
        ex = p.exact_solution(xs, ys)
        targets = np.stack([ex["u"][:, 0], ex["u"][:, 1],
                            ex["sigma"][:, 0, 0], ex["sigma"][:, 1, 1],
                            ex["sigma"][:, 0, 1]])
    conditions = p.boundary_conditions()
    sides = []
    for side in SIDES:
        pts = coll.boundary[side]
        dirichlet, neumann = [], []
        for bc in conditions:
            if bc.side != side:
                continue
            target = np.asarray(bc.value(pts[:, 0], pts[:, 1]), dtype=float)
            entry = (_QTY_TO_NET[bc.quantity], target)
            (dirichlet if bc.kind == "dirichlet" else neumann).append(entry)
        sides.append(engine.SideData(pts, dirichlet, neumann))
    return engine.ProblemData(coll.interior, np.asarray(fx), np.asarray(fy),
                              targets, sides, p.material.lam, p.material.mu)


def _frobenius_sq(graph: ScalarGraph, rxx, ryy, rxy) -> NodeRef:
    # symmetric 2x2 Frobenius norm counts the off-diagonal entry twice
    s = graph.add(graph.square(rxx), graph.square(ryy))
    return graph.add(s, graph.scale(graph.square(rxy), 2.0))


def assemble_loss(sol, coll: CollocationSet, p: ManufacturedProblem,
                  cfg: LossConfig, graph: ScalarGraph) -> AssembledLoss:
    """Record the whole objective on the tape and return its root node.

    `sol` may be a MixedSolution or any object exposing the same five fields
    with tape-recordable `forward(graph, x, y)` methods (closed-form fields
    in the oracle tests use this).  Interior coordinates are lifted as input
    leaves so spatial derivatives come off the tangent channels; boundary
    coordinates are lifted as constants since no boundary term differentiates
    spatially.

    This route scales with tape size, not wall-clock budgets: use `train`
    (the vectorized engine) for long runs.
    """
    fields = [sol.u_x, sol.u_y, sol.sigma_xx, sol.sigma_yy, sol.sigma_xy]
    refs = []
    for f in fields:
        if hasattr(f, "lift_parameters"):
            refs.append(f.lift_parameters(graph))
        else:
            refs.append(None)

    def fwd(i, x, y):
        f = fields[i]
        if refs[i] is not None:
            return f.forward_refs(graph, refs[i], x, y)
        return f.forward(graph, x, y)

    xs, ys = coll.interior[:, 0], coll.interior[:, 1]
    x = graph.lift_input(0, xs)
    y = graph.lift_input(1, ys)
    out = [fwd(i, x, y) for i in range(5)]
    gx = [graph.tangent_node(o, 0) for o in out]
    gy = [graph.tangent_node(o, 1) for o in out]

    fx, fy = p.body_force(xs, ys)
    rfx = graph.add(graph.add(gx[engine.SXX], gy[engine.SXY]), graph.lift_constant(fx))
    rfy = graph.add(graph.add(gx[engine.SXY], gy[engine.SYY]), graph.lift_constant(fy))
    mse_f = graph.mean(graph.add(graph.square(rfx), graph.square(rfy)))

    lam, mu = p.material.lam, p.material.mu
    exx, eyy = gx[engine.UX], gy[engine.UY]
    exy = graph.scale(graph.add(gy[engine.UX], gx[engine.UY]), 0.5)
    tr = graph.add(exx, eyy)
    hxx = graph.add(graph.scale(tr, lam), graph.scale(exx, 2.0 * mu))
    hyy = graph.add(graph.scale(tr, lam), graph.scale(eyy, 2.0 * mu))
    hxy = graph.scale(exy, 2.0 * mu)
    mse_c = graph.mean(_frobenius_sq(graph,
                                     graph.sub(out[engine.SXX], hxx),
                                     graph.sub(out[engine.SYY], hyy),
                                     graph.sub(out[engine.SXY], hxy)))

    mse_u = mse_sigma = None
    if cfg.alpha:
        ex = p.exact_solution(xs, ys)
        ru_x = graph.sub(out[engine.UX], graph.lift_constant(ex["u"][:, 0]))
        ru_y = graph.sub(out[engine.UY], graph.lift_constant(ex["u"][:, 1]))
        mse_u = graph.mean(graph.add(graph.square(ru_x), graph.square(ru_y)))
        mse_sigma = graph.mean(_frobenius_sq(
            graph,
            graph.sub(out[engine.SXX], graph.lift_constant(ex["sigma"][:, 0, 0])),
            graph.sub(out[engine.SYY], graph.lift_constant(ex["sigma"][:, 1, 1])),
            graph.sub(out[engine.SXY], graph.lift_constant(ex["sigma"][:, 0, 1]))))

    # boundary terms: sum of squared componentwise violations per bucket,
    # averaged over the bucket's total point count
    conditions = p.boundary_conditions()
    d_sums, n_sums = [], []
    n_d = n_n = 0
    for side in SIDES:
        pts = coll.boundary[side]
        bx = graph.lift_constant(pts[:, 0])
        by = graph.lift_constant(pts[:, 1])
        side_out = {}
        side_conditions = [bc for bc in conditions if bc.side == side]
        has_d = any(bc.kind == "dirichlet" for bc in side_conditions)
        has_n = any(bc.kind == "neumann" for bc in side_conditions)
        n_d += pts.shape[0] if has_d else 0
        n_n += pts.shape[0] if has_n else 0
        for bc in side_conditions:
            i = _QTY_TO_NET[bc.quantity]
            if i not in side_out:
                side_out[i] = fwd(i, bx, by)
            target = np.asarray(bc.value(pts[:, 0], pts[:, 1]), dtype=float)
            r = graph.sub(side_out[i], graph.lift_constant(target))
            sq = graph.scale(graph.mean(graph.square(r)), float(pts.shape[0]))
            (d_sums if bc.kind == "dirichlet" else n_sums).append(sq)

    def total_of(parts, count):
        acc = parts[0]
        for q in parts[1:]:
            acc = graph.add(acc, q)
        return graph.scale(acc, 1.0 / count)

    mse_gd = total_of(d_sums, n_d)
    mse_gn = total_of(n_sums, n_n)

    root = graph.add(mse_gd, graph.add(mse_f, mse_gn))
    root = graph.add(root, graph.scale(mse_c, cfg.eta))
    if cfg.alpha:
        root = graph.add(root, graph.add(mse_u, mse_sigma))

    breakdown = LossBreakdown(
        graph.value(mse_gd), graph.value(mse_f), graph.value(mse_gn),
        graph.value(mse_c),
        graph.value(mse_u) if mse_u is not None else 0.0,
        graph.value(mse_sigma) if mse_sigma is not None else 0.0,
        graph.value(root))
    return AssembledLoss(root, breakdown)


def train(sol: MixedSolution, coll: CollocationSet, p: ManufacturedProblem,
          loss_cfg: LossConfig, train_cfg: TrainConfig) -> TrainResult:
    """Full-batch Adam on the concatenated parameters of all five networks.

    Deterministic for a fixed seed (the seed fixes nothing here beyond what
    the caller used to initialize `sol`; the loop itself is deterministic).
    A non-finite loss or gradient aborts the run with a diagnostic and the
    last finite state is returned.
    """
    data = prepare_problem_data(coll, p, loss_cfg)
    shape = sol.shape
    stack = sol.stacked()
    theta = stack.to_flat()
    evaluator = engine.LossEvaluator(data, shape.hidden_layers, shape.width)
    state = engine.AdamState.zeros(theta.size)
    history: list[HistoryRow] = []
    t0 = time.perf_counter()

    def snapshot(epoch, terms):
        history.append(HistoryRow(
            epoch, time.perf_counter() - t0,
            LossBreakdown.from_terms(terms, loss_cfg.eta, loss_cfg.alpha)))

    last_good = theta.copy()
    for epoch in range(train_cfg.epochs):
        terms, grad = evaluator(stack, loss_cfg.eta, loss_cfg.alpha)
        total = terms.total(loss_cfg.eta, loss_cfg.alpha)
        if not (np.isfinite(total) and np.all(np.isfinite(grad))):
            reason = (f"non-finite loss or gradient at epoch {epoch} "
                      f"(total={total!r}); returning last finite state")
            log.error(reason)
            return TrainResult(sol.with_parameters(last_good), history,
                               aborted=True, abort_reason=reason)
        last_good = theta
        if epoch % train_cfg.log_every == 0:
            snapshot(epoch, terms)
        theta = engine.adam_step(theta, grad, state, train_cfg.learning_rate,
                                 train_cfg.beta1, train_cfg.beta2,
                                 train_cfg.eps_adam)
        stack.write_flat(theta)

    terms, _ = evaluator(stack, loss_cfg.eta, loss_cfg.alpha, want_grad=False)
    snapshot(train_cfg.epochs, terms)
    return TrainResult(sol.with_parameters(theta), history)

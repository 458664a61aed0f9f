"""Experiment harness: benchmark scenarios, asymptotic sweeps, reports, CLI.

Two scenarios of the unit-square benchmark:

  bvp        alpha = 0, eta = 0.01, 100x100 collocation, 50000 epochs
  regression alpha = 1, eta = 0,    40x40 data grid,     20000 epochs

and three sweep axes (sampling grid, network width, network depth) with the
level lists of the study this reproduces.  Every run trains the five-field
solution, evaluates the energy error bound on a fine test grid (200x200 by
default), and writes deterministic CSV artifacts: result files contain no
timings, so reruns with one seed are byte-identical; wall-clock goes to
history.csv and runmeta.json instead.

Output layout per run directory:

  config.json   canonical config and its sha256 (tamper evidence)
  history.csv   epoch, six loss terms, total, wall-clock seconds
  report.csv    run id, test grid, psi, phi, varphi, sum_gap, bound flags
  runmeta.json  psi at initialization, wall-clock, abort info
  checkpoint/   one fieldnet-v1 text file per field network

Sweeps add sweep.csv (one row per level) and sweep_plot.csv (long format,
ready for any plotting tool).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cre, engine, pinn
from .autodiff import ScalarGraph
from .elasticity import ManufacturedProblem, Material, energy_W, energy_Wstar, hooke_apply
from .network import MixedSolution, NetworkShape

__all__ = [
    "RunConfig",
    "RunRecord",
    "ExperimentReport",
    "SweepPlan",
    "run_scenario",
    "run_sweep",
    "selftest",
    "cli",
    "main",
]

log = logging.getLogger(__name__)

SCENARIOS = ("bvp", "regression")
AXES = ("sampling", "neurons", "layers")

PAPER_LEVELS = {
    ("bvp", "sampling"): [40, 60, 80, 100],
    ("regression", "sampling"): [10, 20, 40, 80],
    ("bvp", "neurons"): [20, 40, 60, 80],
    ("regression", "neurons"): [20, 40, 60, 80],
    ("bvp", "layers"): [4, 6, 8, 10],
    ("regression", "layers"): [4, 6, 8, 10],
}


@dataclass(frozen=True)
class RunConfig:
    """Declarative description of one training-plus-estimation run."""

    scenario: str = "bvp"
    eta: float = 0.01
    alpha: int = 0
    n_collocation: int = 100
    hidden_layers: int = 4
    width: int = 20
    epochs: int = 50000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    log_every: int = 100
    seed: int = 0
    test_grid: int = 200
    lam: float = 1.0
    mu: float = 0.5
    Q: float = 4.0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")

    @classmethod
    def defaults(cls, scenario: str) -> "RunConfig":
        if scenario == "bvp":
            return cls(scenario="bvp", eta=0.01, alpha=0, n_collocation=100,
                       epochs=50000)
        if scenario == "regression":
            return cls(scenario="regression", eta=0.0, alpha=1, n_collocation=40,
                       epochs=20000)
        raise ValueError(f"scenario must be one of {SCENARIOS}")

    def with_overrides(self, overrides: dict | None) -> "RunConfig":
        if not overrides:
            return self
        unknown = set(overrides) - set(asdict(self))
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **overrides)

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @property
    def run_id(self) -> str:
        return f"{self.scenario}-{self.config_hash[:12]}"

    def problem(self) -> ManufacturedProblem:
        return ManufacturedProblem(Material(self.lam, self.mu), self.Q)


@dataclass
class RunRecord:
    """One completed (or failed) run of a scenario."""

    run_id: str
    config: RunConfig
    level: int | None = None
    report: cre.ErrorReport | None = None
    final_loss: pinn.LossBreakdown | None = None
    psi_init: float | None = None
    wall_seconds: float = 0.0
    aborted: bool = False
    error: str | None = None


@dataclass
class ExperimentReport:
    rows: list[RunRecord] = field(default_factory=list)

    def completed(self) -> list[RunRecord]:
        return [r for r in self.rows if r.report is not None]


def _write_history_csv(path: Path, history: list[pinn.HistoryRow]):
    lines = ["epoch,mse_gamma_d,mse_f,mse_gamma_n,mse_c,mse_u,mse_sigma,total,seconds"]
    for row in history:
        b = row.loss
        lines.append(",".join([str(row.epoch)] + [repr(v) for v in (
            b.mse_gamma_d, b.mse_f, b.mse_gamma_n, b.mse_c, b.mse_u,
            b.mse_sigma, b.total)] + [f"{row.seconds:.3f}"]))
    path.write_text("\n".join(lines) + "\n")


def run_scenario(scenario: str, overrides: dict | None = None,
                 out_dir=None) -> RunRecord:
    """Train one configuration, estimate its error bound, write artifacts.

    Returns the RunRecord; with out_dir set, also writes the deterministic
    CSV/JSON artifact set described in the module docstring.
    """
    cfg = RunConfig.defaults(scenario).with_overrides(overrides)
    p = cfg.problem()
    shape = NetworkShape(cfg.hidden_layers, cfg.width)
    coll = pinn.make_collocation(cfg.n_collocation, cfg.n_collocation)
    loss_cfg = pinn.LossConfig(eta=cfg.eta, alpha=cfg.alpha)
    train_cfg = pinn.TrainConfig(
        learning_rate=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2,
        eps_adam=cfg.eps_adam, epochs=cfg.epochs, seed=cfg.seed,
        log_every=cfg.log_every)

    log.info("run %s: scenario=%s grid=%dx%d epochs=%d", cfg.run_id, scenario,
             cfg.n_collocation, cfg.n_collocation, cfg.epochs)
    t0 = time.perf_counter()
    sol0 = MixedSolution.initialize(shape, cfg.seed)
    grid = cre.QuadratureGrid(cfg.test_grid)
    psi_init = cre.cre_psi(cre.pair_from_solution(sol0), p.material, grid)

    result = pinn.train(sol0, coll, p, loss_cfg, train_cfg)
    report = cre.bound_report(cre.pair_from_solution(result.solution), p, grid)
    wall = time.perf_counter() - t0
    record = RunRecord(cfg.run_id, cfg, report=report,
                       final_loss=result.history[-1].loss, psi_init=psi_init,
                       wall_seconds=wall, aborted=result.aborted,
                       error=result.abort_reason)
    log.info("run %s done in %.1fs: psi=%.3e phi=%.3e varphi=%.3e gap=%.3f",
             cfg.run_id, wall, report.psi, report.phi, report.varphi,
             report.sum_gap)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        out.joinpath("config.json").write_text(json.dumps(
            {"config": json.loads(cfg.canonical_json()), "hash": cfg.config_hash},
            indent=2, sort_keys=True) + "\n")
        _write_history_csv(out / "history.csv", result.history)
        out.joinpath("report.csv").write_text(
            cre.ErrorReport.CSV_HEADER + "\n"
            + report.csv_row(cfg.run_id, cfg.test_grid) + "\n")
        out.joinpath("runmeta.json").write_text(json.dumps({
            "run_id": cfg.run_id, "psi_init": psi_init,
            "wall_seconds": round(wall, 3), "aborted": result.aborted,
            "error": result.abort_reason}, indent=2, sort_keys=True) + "\n")
        result.solution.save(out / "checkpoint")
    return record


@dataclass(frozen=True)
class SweepPlan:
    """One sweep axis of one scenario with its level list.

    The canonical plans (`SweepPlan.paper`) carry the study's level lists:
    sampling 40/60/80/100 for the BVP and 10/20/40/80 for regression, widths
    20/40/60/80 at 4 layers, depths 4/6/8/10 at width 20.
    """

    scenario: str
    axis: str
    levels: tuple[int, ...]

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if len(self.levels) == 0:
            raise ValueError("levels must be a non-empty list")
        if any(int(v) <= 0 for v in self.levels):
            raise ValueError("levels must be positive integers")

    @classmethod
    def paper(cls, scenario: str, axis: str) -> "SweepPlan":
        return cls(scenario, axis, tuple(PAPER_LEVELS[(scenario, axis)]))

    def level_overrides(self, level: int) -> dict:
        if self.axis == "sampling":
            return {"n_collocation": int(level)}
        if self.axis == "neurons":
            return {"width": int(level), "hidden_layers": 4}
        return {"hidden_layers": int(level), "width": 20}


SWEEP_CSV_HEADER = ("level,psi,phi,varphi,phi_over_psi,varphi_over_psi,"
                    "run_id,config_hash,seed,error")


def _sweep_csv_row(rec: RunRecord) -> str:
    if rec.report is None:
        return ",".join([str(rec.level), "", "", "", "", "", rec.run_id,
                         rec.config.config_hash, str(rec.config.seed),
                         (rec.error or "failed").replace(",", ";")])
    r = rec.report
    return ",".join([str(rec.level), repr(r.psi), repr(r.phi), repr(r.varphi),
                     repr(r.phi / r.psi if r.psi else 0.0),
                     repr(r.varphi / r.psi if r.psi else 0.0),
                     rec.run_id, rec.config.config_hash, str(rec.config.seed), ""])


def run_sweep(plan: SweepPlan, overrides: dict | None = None,
              out_dir=None) -> ExperimentReport:
    """One run per level with derived seeds; failures are recorded, not fatal.

    Per-level seeds are base_seed + level_index so levels are independent
    but the whole sweep reproduces from one seed.
    """
    base = RunConfig.defaults(plan.scenario).with_overrides(overrides)
    report = ExperimentReport()
    for i, level in enumerate(plan.levels):
        level_over = dict(overrides or {})
        level_over.update(plan.level_overrides(level))
        level_over["seed"] = base.seed + i
        level_dir = Path(out_dir) / f"level_{level}" if out_dir is not None else None
        try:
            rec = run_scenario(plan.scenario, level_over, level_dir)
        except Exception as exc:  # record and continue with later levels
            cfg = RunConfig.defaults(plan.scenario).with_overrides(level_over)
            log.exception("sweep level %s failed", level)
            rec = RunRecord(cfg.run_id, cfg, error=str(exc), aborted=True)
        rec.level = level
        report.rows.append(rec)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = [SWEEP_CSV_HEADER] + [_sweep_csv_row(r) for r in report.rows]
        out.joinpath("sweep.csv").write_text("\n".join(rows) + "\n")
        plot = ["axis_value,series,value"]
        for rec in report.completed():
            r = rec.report
            for name, v in [("phi", r.phi), ("varphi", r.varphi), ("psi", r.psi),
                            ("phi_over_psi", r.phi / r.psi if r.psi else 0.0),
                            ("varphi_over_psi", r.varphi / r.psi if r.psi else 0.0)]:
                plot.append(f"{rec.level},{name},{v!r}")
        out.joinpath("sweep_plot.csv").write_text("\n".join(plot) + "\n")
    return report


# -- selftest ------------------------------------------------------------


def _check(name: str, ok: bool, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok


def selftest() -> int:
    """Fast oracle and property checks; returns a process exit status."""
    rng = np.random.default_rng(20240901)
    ok = True
    p = ManufacturedProblem()

    # tape gradients against central finite differences
    worst = 0.0
    for _ in range(10):
        w = rng.normal(size=4)
        xv, yv = rng.uniform(-1, 1, size=2)

        def build(wv):
            g = ScalarGraph()
            x, y = g.lift_input(0, xv), g.lift_input(1, yv)
            ps = [g.lift_parameter(v) for v in wv]
            expr = g.add(g.mul(ps[0], g.tanh(g.add(g.mul(ps[1], x), y))),
                         g.mul(ps[2], g.sin(g.mul(ps[3], y))))
            return g, expr

        g, expr = build(w)
        grad = g.reverse_sweep(expr)
        h = 1e-6
        for i in range(4):
            wp, wm = w.copy(), w.copy()
            wp[i] += h
            wm[i] -= h
            fd = (build(wp)[0].value(build(wp)[1]) -
                  build(wm)[0].value(build(wm)[1])) / (2 * h)
            worst = max(worst, abs(grad[i] - fd) / max(abs(fd), 1e-8))
    ok &= _check("tape-gradients-vs-fd", worst < 1e-5, f"worst rel err {worst:.2e}")

    # tape vs vectorized engine on a small assembled loss
    sol = MixedSolution.initialize(NetworkShape(2, 5), seed=5)
    coll = pinn.make_collocation(5, 4)
    cfg = pinn.LossConfig(eta=0.01, alpha=1)
    g = ScalarGraph()
    asm = pinn.assemble_loss(sol, coll, p, cfg, g)
    gt = g.reverse_sweep(asm.root)
    data = pinn.prepare_problem_data(coll, p, cfg)
    terms, ge = engine.loss_and_grad(sol.stacked(), data, cfg.eta, cfg.alpha)
    dv = abs(terms.total(cfg.eta, cfg.alpha) - asm.breakdown.total)
    dg = float(np.max(np.abs(gt - ge)))
    ok &= _check("tape-vs-engine", dv < 1e-12 and dg < 1e-10,
                 f"loss diff {dv:.2e}, grad diff {dg:.2e}")

    # convexity inequality of the energy pair
    eps = rng.normal(size=(10000, 2, 2))
    eps = 0.5 * (eps + np.swapaxes(eps, -1, -2))
    tau = rng.normal(size=(10000, 2, 2))
    tau = 0.5 * (tau + np.swapaxes(tau, -1, -2))
    fy = (energy_W(p.material, eps) + energy_Wstar(p.material, tau)
          - np.einsum("nij,nij->n", tau, eps))
    gap = float(np.max(np.abs(
        energy_W(p.material, eps) + energy_Wstar(p.material, hooke_apply(p.material, eps))
        - np.einsum("nij,nij->n", hooke_apply(p.material, eps), eps))))
    ok &= _check("fenchel-young", float(fy.min()) >= -1e-12 and gap < 1e-10,
                 f"min {fy.min():.2e}, equality gap {gap:.2e}")

    # manufactured solution consistency: FD divergence of sigma + f
    xs = rng.uniform(0.05, 0.95, size=1000)
    ys = rng.uniform(0.05, 0.95, size=1000)
    h = 1e-6
    sig = lambda x, y: p.exact_solution(x, y)["sigma"]
    dsxx = (sig(xs + h, ys)[:, 0, 0] - sig(xs - h, ys)[:, 0, 0]) / (2 * h)
    dsxy_y = (sig(xs, ys + h)[:, 0, 1] - sig(xs, ys - h)[:, 0, 1]) / (2 * h)
    dsxy_x = (sig(xs + h, ys)[:, 0, 1] - sig(xs - h, ys)[:, 0, 1]) / (2 * h)
    dsyy = (sig(xs, ys + h)[:, 1, 1] - sig(xs, ys - h)[:, 1, 1]) / (2 * h)
    fx, fyv = p.body_force(xs, ys)
    res = max(float(np.max(np.abs(dsxx + dsxy_y + fx))),
              float(np.max(np.abs(dsxy_x + dsyy + fyv))))
    ok &= _check("manufactured-equilibrium", res < 1e-6,
                 f"max |div sigma + f| = {res:.2e} (fd step {h})")

    # admissible decomposition oracle
    pair = cre.perturbed_admissible_pair(p, 0.15, 8.0)
    rep = cre.bound_report(pair, p, cre.QuadratureGrid(200))
    cross = cre.orthogonality_check(cre.bubble_displacement_gradient(0.15),
                                    cre.airy_stress(8.0), cre.QuadratureGrid(200))
    ok &= _check("decomposition-oracle",
                 rep.sum_gap <= 1e-3 and abs(cross) <= 1e-6,
                 f"gap {rep.sum_gap:.2e}, cross {cross:.2e}")

    # quadrature order
    spair, exact = cre.smooth_test_pair(p, 0.4)
    e100 = cre.cre_psi(spair, p.material, cre.QuadratureGrid(100)) - exact
    e200 = cre.cre_psi(spair, p.material, cre.QuadratureGrid(200)) - exact
    ratio = e100 / e200
    ok &= _check("quadrature-order", 3.5 <= ratio <= 4.5,
                 f"Richardson ratio {ratio:.3f}")

    print("selftest:", "all checks passed" if ok else "FAILURES above")
    return 0 if ok else 1


# -- command line ----------------------------------------------------------


def _add_run_flags(sp):
    sp.add_argument("--config", help="JSON file of config overrides")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--test-grid", type=int, dest="test_grid")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--grid", type=int, dest="n_collocation",
                    help="collocation/data grid size n (n x n interior points)")
    sp.add_argument("--eta", type=float)


def _collect_overrides(args) -> dict:
    overrides = {}
    if args.config:
        overrides.update(json.loads(Path(args.config).read_text()))
    for key in ("seed", "test_grid", "epochs", "n_collocation", "eta"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    return overrides


def cli(argv=None) -> int:
    """Entry point behind the `elastobound` console script."""
    parser = argparse.ArgumentParser(
        prog="elastobound",
        description="Mixed elastic network solver with energy error bounds")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log run progress")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="boundary-value scenario (alpha=0)")
    _add_run_flags(sp)
    sp = sub.add_parser("regress", help="regression scenario (alpha=1)")
    _add_run_flags(sp)

    sp = sub.add_parser("sweep", help="asymptotic sweep over one axis")
    sp.add_argument("--scenario", required=True, choices=SCENARIOS)
    sp.add_argument("--axis", required=True, choices=AXES)
    sp.add_argument("--levels", help="comma-separated level list "
                                     "(default: the study's levels)")
    _add_run_flags(sp)

    sp = sub.add_parser("estimate", help="error bound of saved or exact fields")
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--checkpoint", help="run directory or checkpoint directory")
    group.add_argument("--exact", action="store_true",
                       help="use the shipped exact-solution provider")
    sp.add_argument("--test-grid", type=int, dest="test_grid", default=200)
    sp.add_argument("--out", help="output directory")

    sub.add_parser("selftest", help="run the fast oracle/property checks")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command in ("solve", "regress"):
            scenario = "bvp" if args.command == "solve" else "regression"
            rec = run_scenario(scenario, _collect_overrides(args), args.out)
            r = rec.report
            print(f"{rec.run_id}: psi={r.psi!r} phi={r.phi!r} varphi={r.varphi!r} "
                  f"sum_gap={r.sum_gap!r}")
            return 1 if rec.aborted else 0

        if args.command == "sweep":
            overrides = _collect_overrides(args)
            if args.levels:
                levels = tuple(int(v) for v in args.levels.split(","))
                plan = SweepPlan(args.scenario, args.axis, levels)
            else:
                plan = SweepPlan.paper(args.scenario, args.axis)
            out = args.out or f"sweep_{args.scenario}_{args.axis}"
            report = run_sweep(plan, overrides, out)
            n_ok = len(report.completed())
            print(f"sweep complete: {n_ok}/{len(report.rows)} levels OK, "
                  f"results in {out}/sweep.csv")
            return 0 if n_ok == len(report.rows) else 1

        if args.command == "estimate":
            p = ManufacturedProblem()
            if args.exact:
                pair = cre.pair_from_exact(p)
                run_id = "exact"
            else:
                ckpt = Path(args.checkpoint)
                if (ckpt / "checkpoint").is_dir():
                    ckpt = ckpt / "checkpoint"
                pair = cre.pair_from_solution(MixedSolution.load(ckpt))
                run_id = ckpt.parent.name or "checkpoint"
            rep = cre.bound_report(pair, p, cre.QuadratureGrid(args.test_grid))
            row = rep.csv_row(run_id, args.test_grid)
            print(cre.ErrorReport.CSV_HEADER)
            print(row)
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                out.joinpath("report.csv").write_text(
                    cre.ErrorReport.CSV_HEADER + "\n" + row + "\n")
            return 0

        if args.command == "selftest":
            return selftest()
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    raise SystemExit(cli())


if __name__ == "__main__":
    main()

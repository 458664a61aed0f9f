"""Constitutive-relation error and energy error functionals by midpoint quadrature.

For an admissible displacement/stress pair the constitutive residual
r = sigma_hat - K : grad(u_hat) integrates to the estimator

    psi = integral of 1/2 r : K^-1 : r,

which splits exactly into the displacement energy error phi and the stress
energy error varphi when the pair satisfies the admissibility conditions;
for trained network pairs the split (and the upper-bound property) holds
only approximately, so bound_report records flags and the relative gap
instead of failing hard.

Quadrature is the cell-centered midpoint rule on an n x n uniform grid of
the unit square: points ((i+1/2)/n, (j+1/2)/n), weight 1/n^2, second-order
accurate and corner-free.  Field providers are vectorized callables:

    displacement(xs, ys) -> (u (N,2), grad_u (N,2,2))
    stress(xs, ys)       -> sigma (N,2,2)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .elasticity import ManufacturedProblem, Material, hooke_apply, hooke_inverse
from .network import MixedSolution, evaluate_fields

__all__ = [
    "QuadratureGrid",
    "AdmissiblePair",
    "ErrorReport",
    "cre_psi",
    "phi_error",
    "varphi_error",
    "bound_report",
    "orthogonality_check",
    "pair_from_exact",
    "pair_from_solution",
    "bubble_displacement_gradient",
    "airy_stress",
    "perturbed_admissible_pair",
]


@dataclass(frozen=True)
class QuadratureGrid:
    """Cell-centered n x n midpoint rule on [0,1]^2; weights sum to 1."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid size must be >= 1")

    @property
    def weight(self) -> float:
        return 1.0 / (self.n * self.n)

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """(xs, ys) arrays of the n^2 midpoints, y varying fastest."""
        c = (np.arange(self.n) + 0.5) / self.n
        xx, yy = np.meshgrid(c, c, indexing="ij")
        return xx.ravel(), yy.ravel()


@dataclass(frozen=True)
class AdmissiblePair:
    """Displacement and stress providers forming a candidate admissible pair."""

    displacement: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    stress: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ErrorReport:
    """Estimator value, the two energy errors, and bound diagnostics."""

    psi: float
    phi: float
    varphi: float
    sum_gap: float
    psi_ge_phi: bool
    psi_ge_varphi: bool

    CSV_HEADER = "run_id,grid,psi,phi,varphi,sum_gap,psi_ge_phi,psi_ge_varphi"

    def csv_row(self, run_id: str, grid: int) -> str:
        return ",".join([run_id, str(grid), repr(self.psi), repr(self.phi),
                         repr(self.varphi), repr(self.sum_gap),
                         str(int(self.psi_ge_phi)), str(int(self.psi_ge_varphi))])


def _check_finite(name: str, arr: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    bad = ~np.all(np.isfinite(arr), axis=tuple(range(1, arr.ndim)))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise FloatingPointError(
            f"non-finite {name} at quadrature point ({xs[k]}, {ys[k]})")


def cre_psi(pair: AdmissiblePair, m: Material, grid: QuadratureGrid) -> float:
    """Quadrature of 1/2 (sigma - K:grad u) : K^-1 : (sigma - K:grad u)."""
    xs, ys = grid.points()
    _, grad_u = pair.displacement(xs, ys)
    sigma = pair.stress(xs, ys)
    _check_finite("displacement gradient", grad_u, xs, ys)
    _check_finite("stress", sigma, xs, ys)
    r = sigma - hooke_apply(m, grad_u)
    dens = 0.5 * np.einsum("nij,nij->n", r, hooke_inverse(m, r))
    return float(np.sum(dens) * grid.weight)


def phi_error(u_provider, p: ManufacturedProblem, grid: QuadratureGrid) -> float:
    """Displacement energy error 1/2 grad(e) : K : grad(e), e = u_hat - u_exact."""
    xs, ys = grid.points()
    _, grad_u = u_provider(xs, ys)
    _check_finite("displacement gradient", grad_u, xs, ys)
    e = grad_u - p.exact_solution(xs, ys)["grad_u"]
    dens = 0.5 * np.einsum("nij,nij->n", e, hooke_apply(p.material, e))
    return float(np.sum(dens) * grid.weight)


def varphi_error(sigma_provider, p: ManufacturedProblem, grid: QuadratureGrid) -> float:
    """Stress energy error 1/2 r : K^-1 : r, r = sigma_hat - sigma_exact."""
    xs, ys = grid.points()
    sigma = sigma_provider(xs, ys)
    _check_finite("stress", sigma, xs, ys)
    r = sigma - p.exact_solution(xs, ys)["sigma"]
    dens = 0.5 * np.einsum("nij,nij->n", r, hooke_inverse(p.material, r))
    return float(np.sum(dens) * grid.weight)


def bound_report(pair: AdmissiblePair, p: ManufacturedProblem,
                 grid: QuadratureGrid) -> ErrorReport:
    """psi, phi, varphi, their relative stacking gap, and the bound flags.

    The flags report whether psi >= phi and psi >= varphi at quadrature
    level; for trained network fields small violations are possible and are
    reported rather than raised.
    """
    psi = cre_psi(pair, p.material, grid)
    phi = phi_error(pair.displacement, p, grid)
    varphi = varphi_error(pair.stress, p, grid)
    gap = abs(phi + varphi - psi) / psi if psi > 0.0 else 0.0
    return ErrorReport(psi, phi, varphi, gap, psi >= phi, psi >= varphi)


def orthogonality_check(e_grad_provider, r_provider, grid: QuadratureGrid) -> float:
    """Quadrature of the cross term r : grad(e).

    Vanishes (up to quadrature error) whenever r is divergence-free with
    zero tractions where displacements are free and grad(e) comes from a
    perturbation vanishing on the displacement boundary.
    """
    xs, ys = grid.points()
    ge = e_grad_provider(xs, ys)
    r = r_provider(xs, ys)
    return float(np.sum(np.einsum("nij,nij->n", r, ge)) * grid.weight)


# -- providers ----------------------------------------------------------


def pair_from_exact(p: ManufacturedProblem) -> AdmissiblePair:
    """The exact solution as a provider pair (psi = phi = varphi = 0)."""

    def displacement(xs, ys):
        ex = p.exact_solution(xs, ys)
        return ex["u"], ex["grad_u"]

    def stress(xs, ys):
        return p.exact_solution(xs, ys)["sigma"]

    return AdmissiblePair(displacement, stress)


def pair_from_solution(sol: MixedSolution) -> AdmissiblePair:
    """Trained (or initialized) network fields as a provider pair."""

    def displacement(xs, ys):
        out = evaluate_fields(sol, np.column_stack([xs, ys]))
        return out["u"], out["grad_u"]

    def stress(xs, ys):
        return evaluate_fields(sol, np.column_stack([xs, ys]))["sigma"]

    return AdmissiblePair(displacement, stress)


def bubble_displacement_gradient(amplitude: float):
    """grad of e = a sin(pi x) sin(pi y) (1, 1); e vanishes on the whole boundary."""

    def grad(xs, ys):
        a = amplitude
        gx = a * np.pi * np.cos(np.pi * xs) * np.sin(np.pi * ys)
        gy = a * np.pi * np.sin(np.pi * xs) * np.cos(np.pi * ys)
        ge = np.empty((xs.size, 2, 2))
        ge[:, 0, 0] = gx
        ge[:, 0, 1] = gy
        ge[:, 1, 0] = gx
        ge[:, 1, 1] = gy
        return ge

    return grad


def airy_stress(amplitude: float):
    """Divergence-free stress from the potential A = b h(x) g(y).

    h(s) = s^2 (1-s)^2 (1+s) and g(s) = s^2 (1-s)^2: double roots at 0 and 1
    in both factors make every constrained traction component vanish on its
    side, while the (1+s) factor breaks the x-reflection symmetry so the
    cross term against symmetric displacement bumps is quadrature-limited
    rather than cancelling identically on symmetric grids.

    r_xx = A_yy, r_yy = A_xx, r_xy = -A_xy; div r = 0 identically.
    """

    def g(s):
        return (s * (1.0 - s)) ** 2

    def gp(s):
        return 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s)

    def gpp(s):
        return 2.0 * (1.0 - 6.0 * s + 6.0 * s * s)

    def h(s):
        return g(s) * (1.0 + s)

    def hp(s):
        return gp(s) * (1.0 + s) + g(s)

    def hpp(s):
        return gpp(s) * (1.0 + s) + 2.0 * gp(s)

    def stress(xs, ys):
        b = amplitude
        r = np.empty((xs.size, 2, 2))
        r[:, 0, 0] = b * h(xs) * gpp(ys)
        r[:, 1, 1] = b * hpp(xs) * g(ys)
        r[:, 0, 1] = -b * hp(xs) * gp(ys)
        r[:, 1, 0] = r[:, 0, 1]
        return r

    return stress


def perturbed_admissible_pair(p: ManufacturedProblem, bubble_amplitude: float,
                              airy_amplitude: float) -> AdmissiblePair:
    """Exact pair plus an exactly admissible perturbation in each field.

    The displacement bump keeps kinematic admissibility (zero on the whole
    boundary); the Airy field keeps static admissibility (divergence-free,
    zero constrained tractions), so the decomposition psi = phi + varphi
    holds up to quadrature error only.
    """
    e_grad = bubble_displacement_gradient(bubble_amplitude)
    r = airy_stress(airy_amplitude)

    def displacement(xs, ys):
        ex = p.exact_solution(xs, ys)
        a = bubble_amplitude
        bump = a * np.sin(np.pi * xs) * np.sin(np.pi * ys)
        u = ex["u"] + bump[:, None]
        return u, ex["grad_u"] + e_grad(xs, ys)

    def stress(xs, ys):
        return p.exact_solution(xs, ys)["sigma"] + r(xs, ys)

    return AdmissiblePair(displacement, stress)


def smooth_test_pair(p: ManufacturedProblem, amplitude: float):
    """Pair with closed-form estimator value, for quadrature-order checks.

    The displacement is exact and the stress carries an exponential bump in
    its xx component, so the estimator density c^2 k e^(2x) e^(2y) has a
    known integral and a genuine (no symmetry cancellation) second-order
    midpoint error.  Returns (pair, exact_psi).
    """
    lam, mu = p.material.lam, p.material.mu
    c = amplitude

    def stress(xs, ys):
        s = p.exact_solution(xs, ys)["sigma"].copy()
        s[:, 0, 0] += c * np.exp(xs) * np.exp(ys)
        return s

    # closed form: for r = diag(s, 0), 1/2 r:K^-1:r = s^2 (lam+2mu)/(8 mu (lam+mu))
    k = (lam + 2.0 * mu) / (8.0 * mu * (lam + mu))
    half = (np.e ** 2 - 1.0) / 2.0
    exact_psi = k * c * c * half * half
    pair = AdmissiblePair(pair_from_exact(p).displacement, stress)
    return pair, exact_psi

"""Isotropic plane elasticity: Hooke maps, energy densities, benchmark problem.

All tensor-valued functions accept either a single 2x2 array or a batch of
shape (..., 2, 2) and return the matching shape.  The benchmark problem is a
unit square with a manufactured trigonometric/polynomial solution whose body
forces make the momentum balance hold exactly, so every field error is
measurable in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Material",
    "EnergyDensity",
    "QuadraticEnergy",
    "ManufacturedProblem",
    "BoundaryCondition",
    "SIDES",
    "hooke_apply",
    "hooke_inverse",
    "energy_W",
    "energy_Wstar",
    "side_points",
]

SIDES = ("x-", "x+", "y-", "y+")

OUTWARD_NORMALS = {
    "x-": np.array([-1.0, 0.0]),
    "x+": np.array([1.0, 0.0]),
    "y-": np.array([0.0, -1.0]),
    "y+": np.array([0.0, 1.0]),
}


@dataclass(frozen=True)
class Material:
    """Lamé pair (lam, mu) of a homogeneous isotropic material.

    Positive definiteness of the plane Hooke operator requires mu > 0 and
    lam + mu > 0 (eigenvalues 2(lam+mu) on the trace mode and 2 mu on the
    deviatoric modes); both are enforced so the energy densities are
    strictly convex.
    """

    lam: float = 1.0
    mu: float = 0.5

    def __post_init__(self):
        if not (self.mu > 0.0 and self.lam + self.mu > 0.0):
            raise ValueError(
                f"material (lam={self.lam}, mu={self.mu}) is not positive definite: "
                "require mu > 0 and lam + mu > 0"
            )


def _sym(t: np.ndarray) -> np.ndarray:
    return 0.5 * (t + np.swapaxes(t, -1, -2))


def _trace(t: np.ndarray) -> np.ndarray:
    return t[..., 0, 0] + t[..., 1, 1]


def hooke_apply(m: Material, grad_u: np.ndarray) -> np.ndarray:
    """Plane Hooke law sigma = lam tr(eps) I + 2 mu eps with eps = sym(grad_u)."""
    grad_u = np.asarray(grad_u, dtype=float)
    eps = _sym(grad_u)
    tr = _trace(eps)
    sigma = 2.0 * m.mu * eps
    sigma[..., 0, 0] += m.lam * tr
    sigma[..., 1, 1] += m.lam * tr
    return sigma


def hooke_inverse(m: Material, sigma: np.ndarray) -> np.ndarray:
    """Strain from stress: eps = (sigma - lam/(2(lam+mu)) tr(sigma) I) / (2 mu)."""
    sigma = np.asarray(sigma, dtype=float)
    tr = _trace(sigma)
    c = m.lam / (2.0 * (m.lam + m.mu))
    eps = sigma.copy()
    eps[..., 0, 0] -= c * tr
    eps[..., 1, 1] -= c * tr
    return eps / (2.0 * m.mu)


def energy_W(m: Material, grad_u: np.ndarray) -> np.ndarray:
    """Strain energy density 1/2 sigma : eps; invariant to antisymmetric parts."""
    grad_u = np.asarray(grad_u, dtype=float)
    eps = _sym(grad_u)
    sigma = hooke_apply(m, eps)
    return 0.5 * np.einsum("...ij,...ij->...", sigma, eps)


def energy_Wstar(m: Material, sigma: np.ndarray) -> np.ndarray:
    """Complementary energy density 1/2 sigma : K^-1 : sigma."""
    sigma = np.asarray(sigma, dtype=float)
    eps = hooke_inverse(m, sigma)
    return 0.5 * np.einsum("...ij,...ij->...", sigma, eps)


class EnergyDensity:
    """Interface of a convex stored-energy pair (W, W*) and its stress map.

    Implementations must satisfy the Fenchel-Young inequality
    W(eps) + W*(tau) - tau:eps >= 0 with equality iff tau = stress(eps).
    Only the quadratic (linear-elastic) instance ships; nonlinear laws plug
    in through this interface.
    """

    def energy(self, grad_u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def complementary(self, tau: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stress(self, grad_u: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticEnergy(EnergyDensity):
    """The linear-elastic energy pair induced by a Material."""

    material: Material

    def energy(self, grad_u):
        return energy_W(self.material, grad_u)

    def complementary(self, tau):
        return energy_Wstar(self.material, tau)

    def stress(self, grad_u):
        return hooke_apply(self.material, grad_u)


@dataclass(frozen=True)
class BoundaryCondition:
    """One componentwise condition on one side of the square.

    kind is 'dirichlet' for displacement components ('u_x', 'u_y') and
    'neumann' for stress components ('sigma_xx', 'sigma_yy'); value maps
    arrays (x, y) on the side to the prescribed component values.
    """

    side: str
    quantity: str
    kind: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ManufacturedProblem:
    """Unit-square benchmark with a known trigonometric/polynomial solution.

    Sides: x- (x=0), x+ (x=1), y- (y=0), y+ (y=1).  Conditions:
    sigma_xx = 0 and u_y = 0 on x- and x+; u_x = u_y = 0 on y-;
    u_x = 0 and sigma_yy = (lam + 2 mu) Q sin(pi x) on y+.
    """

    material: Material = field(default_factory=Material)
    Q: float = 4.0

    def body_force(self, x, y):
        """Closed-form body force (f_x, f_y) balancing the exact stress field."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lam, mu, Q = self.material.lam, self.material.mu, self.Q
        pi = np.pi
        fx = lam * (4.0 * pi**2 * np.cos(2 * pi * x) * np.sin(pi * y)
                    - pi * np.cos(pi * x) * Q * y**3) \
            + mu * (9.0 * pi**2 * np.cos(2 * pi * x) * np.sin(pi * y)
                    - pi * np.cos(pi * x) * Q * y**3)
        fy = lam * (-3.0 * np.sin(pi * x) * Q * y**2
                    + 2.0 * pi**2 * np.sin(2 * pi * x) * np.cos(pi * y)) \
            + mu * (-6.0 * np.sin(pi * x) * Q * y**2
                    + 2.0 * pi**2 * np.sin(2 * pi * x) * np.cos(pi * y)
                    + pi**2 * np.sin(pi * x) * Q * y**4 / 4.0)
        return fx, fy

    def exact_solution(self, x, y):
        """Exact fields at (x, y): dict with 'u' (..,2), 'grad_u' and 'sigma' (..,2,2).

        Gradients are hand-differentiated closed forms, so downstream error
        functionals carry no differencing error.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        Q = self.Q
        pi = np.pi

        ux = np.cos(2 * pi * x) * np.sin(pi * y)
        uy = np.sin(pi * x) * Q * y**4 / 4.0
        u = np.stack([ux, uy], axis=-1)

        dux_dx = -2 * pi * np.sin(2 * pi * x) * np.sin(pi * y)
        dux_dy = pi * np.cos(2 * pi * x) * np.cos(pi * y)
        duy_dx = pi * np.cos(pi * x) * Q * y**4 / 4.0
        duy_dy = np.sin(pi * x) * Q * y**3
        grad_u = np.stack(
            [np.stack([dux_dx, dux_dy], axis=-1),
             np.stack([duy_dx, duy_dy], axis=-1)],
            axis=-2,
        )
        return {"u": u, "grad_u": grad_u, "sigma": hooke_apply(self.material, grad_u)}

    def neumann_sigma_yy(self, x):
        """Prescribed sigma_yy on the top side: (lam + 2 mu) Q sin(pi x)."""
        lam, mu = self.material.lam, self.material.mu
        return (lam + 2.0 * mu) * self.Q * np.sin(np.pi * np.asarray(x, dtype=float))

    def boundary_conditions(self) -> list[BoundaryCondition]:
        """The componentwise condition table, one entry per (side, quantity)."""
        zero = lambda x, y: np.zeros_like(np.asarray(x, dtype=float))
        table = []
        for side in ("x-", "x+"):
            table.append(BoundaryCondition(side, "sigma_xx", "neumann", zero))
            table.append(BoundaryCondition(side, "u_y", "dirichlet", zero))
        table.append(BoundaryCondition("y-", "u_x", "dirichlet", zero))
        table.append(BoundaryCondition("y-", "u_y", "dirichlet", zero))
        table.append(BoundaryCondition("y+", "u_x", "dirichlet", zero))
        table.append(BoundaryCondition(
            "y+", "sigma_yy", "neumann", lambda x, y: self.neumann_sigma_yy(x)))
        return table


def side_points(side: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    """n uniformly spaced points (endpoints included) on one side of the square."""
    s = np.linspace(0.0, 1.0, n)
    if side == "x-":
        return np.zeros(n), s
    if side == "x+":
        return np.ones(n), s
    if side == "y-":
        return s, np.zeros(n)
    if side == "y+":
        return s, np.ones(n)
    raise ValueError(f"unknown side {side!r}")

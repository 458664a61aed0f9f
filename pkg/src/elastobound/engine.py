"""Vectorized evaluation core for the five-field mixed solution.

The five scalar networks share one architecture, so their weights stack into
batched tensors; additionally the value channel and the two spatial tangent
channels (d/dx, d/dy) share every weight matrix, so all three advance
through a layer in one batched matmul over 3N stacked rows.  The backward
pass differentiates the loss through both the values and the tangent
channels, which is exactly what the scalar tape does node by node.  Tests
pin the two routes against each other to ~1e-12; training uses this one.

A LossEvaluator owns preallocated per-layer buffers and writes into them
with out= arguments, so a training loop does no large allocations after the
first epoch.  Everything is plain float64 numpy; nothing depends on the
tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "StackedMLP",
    "ProblemData",
    "SideData",
    "LossTerms",
    "LossEvaluator",
    "forward_values",
    "forward_with_tangents",
    "loss_and_grad",
    "AdamState",
    "adam_step",
]

# Net order used everywhere: u_x, u_y, sigma_xx, sigma_yy, sigma_xy.
UX, UY, SXX, SYY, SXY = range(5)


def layer_dims(hidden_layers: int, width: int) -> list[int]:
    return [2] + [width] * hidden_layers + [1]


@dataclass
class StackedMLP:
    """Weights of M same-shaped scalar MLPs, stacked along a leading axis."""

    hidden_layers: int
    width: int
    Ws: list[np.ndarray]  # layer l: (M, in_l, out_l)
    bs: list[np.ndarray]  # layer l: (M, out_l)

    @property
    def n_nets(self) -> int:
        return self.Ws[0].shape[0]

    @property
    def n_params_per_net(self) -> int:
        dims = layer_dims(self.hidden_layers, self.width)
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))

    @classmethod
    def from_flat(cls, flat: np.ndarray, hidden_layers: int, width: int, n_nets: int):
        """Unpack (n_nets * P,) or (n_nets, P) into stacked layer arrays.

        Per-net layout: all weight matrices raveled layer by layer (C order),
        then all bias vectors layer by layer.
        """
        dims = layer_dims(hidden_layers, width)
        per = sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))
        flat = np.asarray(flat, dtype=float).reshape(n_nets, per)
        Ws, bs = [], []
        off = 0
        for i in range(len(dims) - 1):
            k = dims[i] * dims[i + 1]
            Ws.append(flat[:, off:off + k].reshape(n_nets, dims[i], dims[i + 1]).copy())
            off += k
        for i in range(len(dims) - 1):
            k = dims[i + 1]
            bs.append(flat[:, off:off + k].copy())
            off += k
        return cls(hidden_layers, width, Ws, bs)

    def to_flat(self) -> np.ndarray:
        """(n_nets * P,) vector, inverse of from_flat."""
        M = self.n_nets
        parts = [W.reshape(M, -1) for W in self.Ws] + [b for b in self.bs]
        return np.concatenate(parts, axis=1).reshape(-1)

    def write_flat(self, flat: np.ndarray):
        """Overwrite this stack's arrays from a flat vector (no reallocation)."""
        M = self.n_nets
        flat = flat.reshape(M, -1)
        off = 0
        for W in self.Ws:
            k = W.shape[1] * W.shape[2]
            W[...] = flat[:, off:off + k].reshape(W.shape)
            off += k
        for b in self.bs:
            k = b.shape[1]
            b[...] = flat[:, off:off + k]
            off += k


class _Pass:
    """Preallocated forward/backward buffers for one batch size.

    With tangents, layer l holds Z (M, 3N, out) whose rows are
    [values; d/dx channel; d/dy channel], the stacked activation S
    (M, 3, N, out), tanh' D, and adjoint buffers B (gradients of z and zdot)
    and U (upstream adjoints).  Without tangents only the value row block
    exists.
    """

    def __init__(self, M: int, N: int, dims: list[int], tangents: bool):
        self.M, self.N, self.dims, self.tangents = M, N, dims, tangents
        L = len(dims) - 1
        self.L = L
        rows = 3 * N if tangents else N
        self.Z = [np.empty((M, rows, dims[l + 1])) for l in range(L)]
        self.S = [np.empty((M, 3, N, dims[l + 1])) if tangents and l < L - 1 else None
                  for l in range(L)]
        self.h = [np.empty((M, N, dims[l + 1])) if not tangents and l < L - 1 else None
                  for l in range(L)]
        self.D = [np.empty((M, N, dims[l + 1])) if l < L - 1 else None for l in range(L)]
        self.B = [np.empty((M, rows, dims[l + 1])) for l in range(L)]
        self.U = [np.empty((M, rows, dims[l + 1])) for l in range(L - 1)]
        if tangents:
            self.tmp1 = [np.empty((M, N, dims[l + 1])) for l in range(L - 1)]
        self.Wg = [np.empty((M, dims[l], dims[l + 1])) for l in range(L)]
        self.bg = [np.empty((M, dims[l + 1])) for l in range(L)]

    # views ------------------------------------------------------------

    def z(self, l):
        return self.Z[l][:, :self.N]

    def zd(self, l):
        # (M, 2, N, out) tangent pre-activations
        return self.Z[l][:, self.N:].reshape(self.M, 2, self.N, self.dims[l + 1])

    def act(self, l):
        """Value activations of layer l: (M, N, out)."""
        if l == self.L - 1:
            return self.z(l)
        if self.S[l] is not None:
            return self.S[l][:, 0]
        return self.h[l]

    # passes -------------------------------------------------------------

    def forward(self, stack: StackedMLP, X: np.ndarray):
        N, L = self.N, self.L
        for l in range(L):
            W, b = stack.Ws[l], stack.bs[l]
            if l == 0:
                np.matmul(X, W, out=self.z(0))
                if self.tangents:
                    # tangent seeds are basis rows, so the seed pass is W itself
                    self.zd(0)[...] = W[:, :, None, :]
            else:
                src = self.S[l - 1] if self.S[l - 1] is not None else self.h[l - 1]
                rows = src.reshape(self.M, -1, self.dims[l])
                np.matmul(rows, W, out=self.Z[l])
            z = self.z(l)
            z += b[:, None, :]
            if l < L - 1:
                if self.tangents:
                    h = np.tanh(z, out=self.S[l][:, 0])
                else:
                    h = np.tanh(z, out=self.h[l])
                D = self.D[l]
                np.multiply(h, h, out=D)
                np.subtract(1.0, D, out=D)
                if self.tangents:
                    np.multiply(D[:, None], self.zd(l), out=self.S[l][:, 1:])

    def values(self):
        return self.act(self.L - 1)[..., 0]

    def grads(self):
        return self.zd(self.L - 1)[..., 0]

    def backward(self, stack: StackedMLP, X: np.ndarray,
                 vbar: np.ndarray, gbar: np.ndarray | None):
        """Fill self.Wg / self.bg with parameter adjoints of the seeded loss."""
        N, L, M = self.N, self.L, self.M
        B = self.B[L - 1]
        B[:, :N, 0] = vbar
        if self.tangents:
            if gbar is not None:
                B[:, N:, 0] = gbar.reshape(M, 2 * N)
            else:
                B[:, N:, 0] = 0.0
        for l in range(L - 1, -1, -1):
            B = self.B[l]
            if l < L - 1:
                # adjoints arriving at layer-l outputs live in U[l]
                U = self.U[l]
                h, D = self.act(l), self.D[l]
                if self.tangents:
                    w = self.dims[l + 1]
                    Uv = U.reshape(M, 3, N, w)
                    # t = D * zd with D = 1 - h^2 feeds the value adjoint
                    t1 = self.tmp1[l]
                    np.einsum("mcnw,mcnw->mnw", Uv[:, 1:], self.zd(l), out=t1)
                    t1 *= h
                    t1 *= 2.0
                    Uv[:, 0] -= t1
                    np.multiply(Uv, D[:, None], out=B.reshape(M, 3, N, w))
                else:
                    np.multiply(U[:, :N], D, out=B[:, :N])
            zb = B[:, :N]
            if l == 0:
                np.matmul(X.T, zb, out=self.Wg[0])
                if self.tangents:
                    zdb = B[:, N:].reshape(M, 2, N, self.dims[1])
                    # tangent seeds are basis rows: channel c hits only row c of W_1
                    self.Wg[0] += np.sum(zdb, axis=2)
            else:
                src = self.S[l - 1] if self.S[l - 1] is not None else self.h[l - 1]
                rows = src.reshape(M, -1, self.dims[l])
                np.matmul(rows.transpose(0, 2, 1), B, out=self.Wg[l])
            np.sum(zb, axis=1, out=self.bg[l])
            if l > 0:
                np.matmul(B, stack.Ws[l].transpose(0, 2, 1), out=self.U[l - 1])

    def flat_grads(self, out: np.ndarray):
        M = self.M
        off = 0
        flat = out.reshape(M, -1)
        for W in self.Wg:
            k = W.shape[1] * W.shape[2]
            flat[:, off:off + k] += W.reshape(M, k)
            off += k
        for b in self.bg:
            k = b.shape[1]
            flat[:, off:off + k] += b
            off += k


def forward_values(stack: StackedMLP, X: np.ndarray) -> np.ndarray:
    """Values of all stacked nets at the rows of X; returns (M, N)."""
    X = np.asarray(X, dtype=float)
    p = _Pass(stack.n_nets, X.shape[0], layer_dims(stack.hidden_layers, stack.width),
              tangents=False)
    p.forward(stack, X)
    return p.values().copy()


def forward_with_tangents(stack: StackedMLP, X: np.ndarray):
    """Values and spatial gradients: (vals (M, N), grads (M, 2, N))."""
    X = np.asarray(X, dtype=float)
    p = _Pass(stack.n_nets, X.shape[0], layer_dims(stack.hidden_layers, stack.width),
              tangents=True)
    p.forward(stack, X)
    return p.values().copy(), p.grads().copy()


@dataclass
class SideData:
    """One boundary side: its points and the componentwise targets on it."""

    X: np.ndarray                                 # (n, 2)
    dirichlet: list[tuple[int, np.ndarray]]       # (net index, target values)
    neumann: list[tuple[int, np.ndarray]]


@dataclass
class ProblemData:
    """Arrays the loss needs, precomputed once per collocation set."""

    X_int: np.ndarray                  # (N, 2)
    fx: np.ndarray                     # (N,)
    fy: np.ndarray
    data_targets: np.ndarray | None    # (5, N) exact fields, None when alpha = 0
    sides: list[SideData]
    lam: float
    mu: float

    @property
    def n_dirichlet(self) -> int:
        return sum(s.X.shape[0] for s in self.sides if s.dirichlet)

    @property
    def n_neumann(self) -> int:
        return sum(s.X.shape[0] for s in self.sides if s.neumann)


class LossTerms(NamedTuple):
    gamma_d: float
    f: float
    gamma_n: float
    c: float
    u: float
    sigma: float

    def total(self, eta: float, alpha: int) -> float:
        return (self.gamma_d + self.f + self.gamma_n
                + eta * self.c + alpha * (self.u + self.sigma))


class LossEvaluator:
    """Reusable loss/gradient evaluation over fixed collocation data."""

    def __init__(self, data: ProblemData, hidden_layers: int, width: int,
                 n_nets: int = 5):
        self.data = data
        dims = layer_dims(hidden_layers, width)
        self.interior = _Pass(n_nets, data.X_int.shape[0], dims, tangents=True)
        self.side_passes = [_Pass(n_nets, s.X.shape[0], dims, tangents=False)
                            for s in data.sides]
        N = data.X_int.shape[0]
        self.vbar = np.zeros((n_nets, N))
        self.gbar = np.zeros((n_nets, 2, N))
        per = sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))
        self.grad = np.zeros(n_nets * per)

    def __call__(self, stack: StackedMLP, eta: float, alpha: int,
                 want_grad: bool = True):
        """Loss terms and (optionally) the flat gradient; buffers are reused,
        so copy the gradient if it must outlive the next call."""
        data = self.data
        N = data.X_int.shape[0]
        lam, mu = data.lam, data.mu
        ip = self.interior
        ip.forward(stack, data.X_int)
        vals = ip.values()
        g = ip.grads()
        gx, gy = g[:, 0], g[:, 1]

        vbar, gbar = self.vbar, self.gbar
        vbar[...] = 0.0
        gbar[...] = 0.0

        # momentum residual
        rfx = gx[SXX] + gy[SXY] + data.fx
        rfy = gx[SXY] + gy[SYY] + data.fy
        mse_f = float(np.mean(rfx**2 + rfy**2))
        gbar[SXX, 0] += 2.0 * rfx / N
        gbar[SXY, 1] += 2.0 * rfx / N
        gbar[SXY, 0] += 2.0 * rfy / N
        gbar[SYY, 1] += 2.0 * rfy / N

        # constitutive mismatch, Frobenius with both off-diagonal entries
        exx, eyy = gx[UX], gy[UY]
        exy = 0.5 * (gy[UX] + gx[UY])
        tr = exx + eyy
        rxx = vals[SXX] - (lam * tr + 2.0 * mu * exx)
        ryy = vals[SYY] - (lam * tr + 2.0 * mu * eyy)
        rxy = vals[SXY] - 2.0 * mu * exy
        mse_c = float(np.mean(rxx**2 + ryy**2 + 2.0 * rxy**2))
        if eta != 0.0:
            axx = eta * 2.0 * rxx / N
            ayy = eta * 2.0 * ryy / N
            axy = eta * 4.0 * rxy / N
            vbar[SXX] += axx
            vbar[SYY] += ayy
            vbar[SXY] += axy
            gbar[UX, 0] -= axx * (lam + 2.0 * mu) + ayy * lam
            gbar[UY, 1] -= axx * lam + ayy * (lam + 2.0 * mu)
            gbar[UX, 1] -= axy * mu
            gbar[UY, 0] -= axy * mu

        # supervised data misfits (regression mode only)
        mse_u = mse_sigma = 0.0
        if alpha:
            t = data.data_targets
            ru0, ru1 = vals[UX] - t[UX], vals[UY] - t[UY]
            rs0, rs1, rs2 = (vals[SXX] - t[SXX], vals[SYY] - t[SYY],
                             vals[SXY] - t[SXY])
            mse_u = float(np.mean(ru0**2 + ru1**2))
            mse_sigma = float(np.mean(rs0**2 + rs1**2 + 2.0 * rs2**2))
            vbar[UX] += 2.0 * ru0 / N
            vbar[UY] += 2.0 * ru1 / N
            vbar[SXX] += 2.0 * rs0 / N
            vbar[SYY] += 2.0 * rs1 / N
            vbar[SXY] += 4.0 * rs2 / N

        if want_grad:
            self.grad[...] = 0.0
            ip.backward(stack, data.X_int, vbar, gbar)
            ip.flat_grads(self.grad)

        # boundary terms, averaged over their total point counts
        nD = data.n_dirichlet
        nN = data.n_neumann
        sum_d = sum_n = 0.0
        for side, sp in zip(data.sides, self.side_passes):
            sp.forward(stack, side.X)
            sv = sp.values()
            svbar = np.zeros_like(sv)
            for net, target in side.dirichlet:
                r = sv[net] - target
                sum_d += float(np.sum(r**2))
                svbar[net] += 2.0 * r / nD
            for net, target in side.neumann:
                r = sv[net] - target
                sum_n += float(np.sum(r**2))
                svbar[net] += 2.0 * r / nN
            if want_grad:
                sp.backward(stack, side.X, svbar, None)
                sp.flat_grads(self.grad)

        terms = LossTerms(sum_d / nD if nD else 0.0, mse_f,
                          sum_n / nN if nN else 0.0, mse_c, mse_u, mse_sigma)
        return terms, (self.grad if want_grad else None)


def loss_and_grad(stack: StackedMLP, data: ProblemData, eta: float, alpha: int,
                  want_grad: bool = True):
    """One-shot loss/gradient (fresh buffers); see LossEvaluator for loops."""
    ev = LossEvaluator(data, stack.hidden_layers, stack.width, stack.n_nets)
    terms, grad = ev(stack, eta, alpha, want_grad)
    return terms, (grad.copy() if grad is not None else None)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState,
              lr: float, beta1: float, beta2: float, eps: float) -> np.ndarray:
    """One Adam update with bias correction; mutates state, returns new theta."""
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    mhat = state.m / (1.0 - beta1 ** state.t)
    vhat = state.v / (1.0 - beta2 ** state.t)
    return theta - lr * mhat / (np.sqrt(vhat) + eps)

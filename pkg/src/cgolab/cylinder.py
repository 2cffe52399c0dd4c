"""Conjugated Helmholtz equation on the cylinder (0, T) x M0.

With u = exp(eta x1) (v + r) and (d1^2 + Delta_g + k^2) u = 0, the remainder
solves, mode by mode in the transversal eigenbasis,

    (d1 - a_j)(d1 - b_j) r_j = F_j,   a_j, b_j = -eta +- mu_j,
    mu_j = sqrt(omega_j^2 - k^2)  (principal branch),

so r_j = S_a S_b F_j with S_z the bounded inverse of d/dx - z on the line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, Resonance, ZeroRealPart
from .quasimode import Beam, SpectralParameter, smoothstep_cutoff
from .spectral import SpectralBasis

RE_FLOOR = 1e-12


@dataclass(frozen=True)
class LineGrid:
    """Uniform x1 nodes h1 * i for i in [-n_pad, n + n_pad]; nodes 0..n cover [0, T]."""

    T: float = 1.0
    n: int = 50
    n_pad: int = 25

    def __post_init__(self):
        if not (self.T > 0 and self.n >= 2 and self.n_pad >= 0):
            raise DomainError("line grid needs T > 0, n >= 2, n_pad >= 0")

    @property
    def h1(self) -> float:
        return self.T / self.n

    @property
    def x(self) -> np.ndarray:
        return self.h1 * np.arange(-self.n_pad, self.n + self.n_pad + 1)

    @property
    def inner(self) -> slice:
        return slice(self.n_pad, self.n_pad + self.n + 1)

    @property
    def x_inner(self) -> np.ndarray:
        return self.x[self.inner]

    @property
    def pad_length(self) -> float:
        return self.n_pad * self.h1

    def cutoff(self) -> np.ndarray:
        """Smooth x1 cutoff: 1 on [0, T], 0 outside the padding."""
        x = self.x
        if self.n_pad == 0:
            return np.ones_like(x)
        p = self.pad_length
        d = np.maximum(np.maximum(-x, x - self.T), 0.0) / p
        # smoothstep_cutoff is 1 below 1/4 and 0 above 1/2 of its argument
        return smoothstep_cutoff(0.25 + 0.25 * d)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n + 1, self.h1)
        w[0] = w[-1] = 0.5 * self.h1
        return w


def _cell_integrals(w, h):
    """I1 = int_0^h e^{-w s} ds and I2 = (1/h) int_0^h s e^{-w s} ds."""
    w = np.asarray(w, dtype=complex)
    wh = w * h
    small = np.abs(wh) < 1e-2
    safe = np.where(small, 1.0, w)
    e = np.exp(-safe * h)
    I1 = np.where(small, h * (1 - wh / 2 + wh**2 / 6 - wh**3 / 24), -np.expm1(-safe * h) / safe)
    I2 = np.where(small, h * (0.5 - wh / 3 + wh**2 / 8 - wh**3 / 30),
                  (1 - e * (1 + safe * h)) / (safe**2 * h))
    return np.exp(-w * h), I1, I2


def resolvent_solve(z, f, h: float, re_floor: float = RE_FLOOR):
    """Bounded solution of u' - z u = f on the line, f sampled on a uniform grid
    (last axis) and compactly supported in it.

    Re z > 0: u(x) = -int_x^inf f(t) e^{-z (t - x)} dt (backward sweep);
    Re z < 0: u(x) =  int_{-inf}^x f(t) e^{z (x - t)} dt (forward sweep).
    Each cell integrates e^{-z s} exactly against the linear interpolant of f.
    ``z`` may be an array broadcasting against f[..., 0].
    """
    f = np.asarray(f)
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z.real) < re_floor):
        raise ZeroRealPart(f"|Re z| below {re_floor}")
    zb = np.broadcast_to(z, f.shape[:-1])
    pos = zb.real > 0
    nx = f.shape[-1]
    u = np.zeros(np.broadcast_shapes(f.shape, zb.shape + (nx,)), dtype=complex)
    # backward sweep for Re z > 0 (w = z), forward for Re z < 0 (w = -z)
    w = np.where(pos, zb, -zb)
    E, I1, I2 = _cell_integrals(w, h)
    fb = np.broadcast_to(f, u.shape)
    acc = np.zeros(zb.shape, dtype=complex)
    for i in range(nx - 2, -1, -1):
        acc = E * acc - (fb[..., i] * I1 + (fb[..., i + 1] - fb[..., i]) * I2)
        u[..., i] = np.where(pos, acc, u[..., i])
    acc = np.zeros(zb.shape, dtype=complex)
    for i in range(nx - 1):
        acc = E * acc + (fb[..., i + 1] * I1 - (fb[..., i + 1] - fb[..., i]) * I2)
        u[..., i + 1] = np.where(pos, u[..., i + 1], acc)
    return u


def mode_roots(eta: complex, k: float, omega2):
    """(a_j, b_j, mu_j) with a = -eta + mu, b = -eta - mu, mu = sqrt(omega^2 - k^2)."""
    mu = np.sqrt(np.asarray(omega2, dtype=complex) - k * k)
    return -eta + mu, -eta - mu, mu


def check_resonance(tau: float, k: float, omega2, rel_tol: float = 1e-6) -> None:
    """Raise Resonance if tau^2 is within rel_tol (1 + tau^2) of some omega_j^2 - k^2 > 0."""
    om = np.asarray(omega2, dtype=float)
    gap = np.abs(tau * tau - (om - k * k))
    bad = np.flatnonzero((om > k * k) & (gap < rel_tol * (1 + tau * tau)))
    if len(bad):
        j = int(bad[0])
        raise Resonance(f"tau^2={tau * tau:.6g} resonates with omega_{j}^2-k^2={om[j] - k * k:.6g}",
                        j, float(om[j]), tau, k)


def line_solve(eta: complex, k: float, omega2, F, h: float, degenerate: float = 1e-6):
    """r_j = S_a S_b F_j for each mode; F has shape (J, nx).

    Uses S_a S_b = (S_a - S_b) / (a - b); modes with |a - b| tiny fall back to
    the composition S_a (S_b F) on the same grid.
    """
    a, b, mu = mode_roots(eta, k, omega2)
    F = np.asarray(F, dtype=complex)
    out = np.empty(np.broadcast_shapes(F.shape, a.shape + (F.shape[-1],)), dtype=complex)
    Fb = np.broadcast_to(F, out.shape)
    close = np.abs(2 * mu) < degenerate * max(1.0, abs(eta))
    far = ~close
    if far.any():
        out[far] = (resolvent_solve(a[far], Fb[far], h) - resolvent_solve(b[far], Fb[far], h)) / (2 * mu[far])[:, None]
    if close.any():
        out[close] = resolvent_solve(a[close], resolvent_solve(b[close], Fb[close], h), h)
    return out


def remainder_solve(sp: SpectralParameter, f, basis: SpectralBasis, line: LineGrid, eta: complex | None = None,
                    check: bool = True):
    """Remainder r on the full line grid for a general right-hand side f(x1, x').

    ``f`` has shape (nx, N + 1, n_theta) on ``line.x``; ``eta`` defaults to
    -(tau + i lambda).  Returns r with the same shape.
    """
    eta = -sp.zeta if eta is None else eta
    if check:
        check_resonance(sp.tau, sp.k, basis.eigenvalues)
    fh = basis.project(f)  # (nx, J)
    rh = line_solve(eta, sp.k, basis.eigenvalues, fh.T, line.h1)
    return basis.synthesize(rh.T)


def mode_profiles(eta: complex, k: float, basis: SpectralBasis, line: LineGrid):
    """R_j(x1) = S_a S_b psi for the line cutoff psi, shape (J, nx)."""
    psi = line.cutoff().astype(complex)
    return line_solve(eta, k, basis.eigenvalues, psi[None, :], line.h1)


@dataclass(frozen=True, eq=False)
class CGOSolution:
    """u = exp(eta x1) (v + r) on the cylinder nodes (x1 in [0, T])."""

    eta: complex
    sp: SpectralParameter
    beam: Beam | None
    basis: SpectralBasis
    line: LineGrid
    v: np.ndarray          # beam samples on the transversal grid, boundary row kept
    r: np.ndarray          # (n + 1, N + 1, n_theta)
    rhs_coeffs: np.ndarray
    truncation: float      # relative L2 mass of the right-hand side outside the basis

    @cached_property
    def field(self) -> np.ndarray:
        x = self.line.x_inner
        return np.exp(self.eta * x)[:, None, None] * (self.v[None] + self.r)

    @property
    def grid(self):
        return self.basis.grid

    def remainder_norm(self) -> float:
        w = self.line.trapezoid_weights()
        return float(np.sqrt(np.sum(w * self.grid.integrate(np.abs(self.r) ** 2))))

    def l2(self) -> float:
        w = self.line.trapezoid_weights()
        return float(np.sqrt(np.sum(w * self.grid.integrate(np.abs(self.field) ** 2))))

    def side_trace(self) -> np.ndarray:
        return self.field[:, -1, :]

    def cap_traces(self) -> np.ndarray:
        return self.field[[0, -1]]

    def helmholtz_residual(self) -> float:
        """||(d1^2 + Delta_g + k^2) u|| / (|s|^2 ||u||) on interior x1 nodes, with
        second differences in x1 and the grid Laplacian transversally."""
        u = self.field
        h = self.line.h1
        d2 = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
        res = d2 + self.grid.laplacian(u[1:-1]) + self.sp.k**2 * u[1:-1]
        res[..., -1, :] = 0.0
        w = self.line.trapezoid_weights()[1:-1]
        rn = np.sqrt(np.sum(w * self.grid.integrate(np.abs(res) ** 2)))
        un = np.sqrt(np.sum(w * self.grid.integrate(np.abs(u[1:-1]) ** 2)))
        return float(rn / (abs(self.sp.s) ** 2 * un)) if un > 0 else 0.0


def assemble_cgo(sign: int, conj: bool, sp: SpectralParameter, beam: Beam, basis: SpectralBasis,
                 line: LineGrid, check: bool = True) -> CGOSolution:
    """CGO exp(eta x1)(v + r) with eta = sign * (tau + i lambda), or its conjugate
    (eta = sign * (tau - i lambda), beam conjugated) when ``conj`` is set."""
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    zeta = sp.zeta
    eta = sign * (np.conj(zeta) if conj else zeta)
    b = beam.conj() if conj != beam.conjugate else beam
    # the beam must solve the equation for s^2 = k^2 + eta^2
    if check:
        check_resonance(sp.tau, sp.k, basis.eigenvalues)
    grid = basis.grid
    v = b(grid.points)
    G = b.residual(grid.points)
    G[-1, :] = 0.0
    g_hat = basis.project(G)
    back = basis.synthesize(g_hat)
    gn = grid.l2(G)
    trunc = float(grid.l2(G - back) / gn) if gn > 0 else 0.0
    R = mode_profiles(eta, sp.k, basis, line)[:, line.inner]  # (J, n + 1)
    r = basis.synthesize((g_hat[:, None] * R).T)
    return CGOSolution(complex(eta), sp, b, basis, line, v, r, g_hat, trunc)


def cgo_c2_norm(cgo: CGOSolution) -> float:
    """Grid sup of |u| and of its first and second derivatives (x1 differences,
    radial grid derivatives, angular Fourier derivatives)."""
    u = cgo.field
    h = cgo.line.h1
    g = cgo.grid
    parts = [np.max(np.abs(u))]
    parts.append(np.max(np.abs(np.diff(u, axis=0))) / h)
    parts.append(np.max(np.abs(u[2:] - 2 * u[1:-1] + u[:-2])) / h**2)
    m = g.angular_modes()
    U = np.fft.fft(u, axis=-1)
    r = g.r[:, None]
    parts.append(np.max(np.abs(np.fft.ifft(1j * m * U, axis=-1) / r)))
    parts.append(np.max(np.abs(np.fft.ifft(-m * m * U, axis=-1) / r**2)))
    if g.kind == "gauss":
        D1, D2 = g._diff
        parts.append(np.max(np.abs(np.einsum("ij,xjk->xik", D1, u))))
        parts.append(np.max(np.abs(np.einsum("ij,xjk->xik", D2, u))))
    else:
        dr = 2 * g.r[0]
        parts.append(np.max(np.abs(np.diff(u, axis=1))) / dr)
        parts.append(np.max(np.abs(u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2])) / dr**2)
    return float(max(parts))


def cgo_c2_bound_check(cgo: CGOSolution, D: float, sigma: float, n: int = 3) -> dict:
    """Ratio of the measured C^2 norm to (k^2+tau^2+lambda^2)^((n+14)/16) e^{sigma|lambda|} e^{D tau}."""
    sp = cgo.sp
    c2 = cgo_c2_norm(cgo)
    bound = (sp.k**2 + sp.tau**2 + sp.lam**2) ** ((n + 14) / 16) * math.exp(sigma * abs(sp.lam) + D * sp.tau)
    return {"c2": c2, "bound": bound, "ratio": c2 / bound, "sup": float(np.max(np.abs(cgo.field)))}

"""Linearized Dirichlet-to-Neumann maps on the cylinder M = [0, T] x M0.

Discretization: second-order differences in x1 (diagonalized by the type-I
sine transform), the transversal Dirichlet eigenbasis in x', and a harmonic
lift of the side data.  All solves are separable and exact for the
semi-discrete operator restricted to the basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dst, idst

from .cylinder import LineGrid
from .errors import DomainError, HelmholtzResonance
from .spectral import SpectralBasis


@dataclass(frozen=True, eq=False)
class BoundaryField:
    """Samples on the side (n + 1, n_theta) at r = 1 and on the caps
    (2, N + 1, n_theta) at x1 = 0 and x1 = T."""

    side: np.ndarray
    caps: np.ndarray

    def __add__(self, other):
        return BoundaryField(self.side + other.side, self.caps + other.caps)

    def __sub__(self, other):
        return BoundaryField(self.side - other.side, self.caps - other.caps)

    def __mul__(self, a):
        return BoundaryField(self.side * a, self.caps * a)

    __rmul__ = __mul__

    def conj(self):
        return BoundaryField(np.conj(self.side), np.conj(self.caps))

    @staticmethod
    def zeros(basis: SpectralBasis, line: LineGrid, dtype=complex):
        g = basis.grid
        return BoundaryField(np.zeros((line.n + 1, g.n_theta), dtype), np.zeros((2,) + g.shape, dtype))


@dataclass(frozen=True, eq=False)
class Cylinder:
    """Discrete cylinder: transversal basis, x1 grid and wavenumber."""

    basis: SpectralBasis
    line: LineGrid
    k: float

    @property
    def grid(self):
        return self.basis.grid

    @property
    def h1(self) -> float:
        return self.line.h1

    @property
    def n(self) -> int:
        return self.line.n

    def x1_weights(self) -> np.ndarray:
        return self.line.trapezoid_weights()

    def integrate(self, F):
        """Volume integral of F (n + 1, N + 1, n_theta)."""
        return np.sum(self.x1_weights() * self.grid.integrate(F))

    def l2(self, F) -> float:
        return float(np.sqrt(self.integrate(np.abs(F) ** 2)))

    def boundary_weights(self):
        side = self.x1_weights()[:, None] * self.grid.boundary_weight * np.ones(self.grid.n_theta)
        caps = np.stack([self.grid.weights, self.grid.weights])
        return side, caps

    def boundary_integral(self, a: BoundaryField, b: BoundaryField | None = None):
        ws, wc = self.boundary_weights()
        fs = a.side if b is None else a.side * b.side
        fc = a.caps if b is None else a.caps * b.caps
        return np.sum(ws * fs) + np.sum(wc * fc)

    def lp_norm(self, a: BoundaryField, p: float) -> float:
        ws, wc = self.boundary_weights()
        return float((np.sum(ws * np.abs(a.side) ** p) + np.sum(wc * np.abs(a.caps) ** p)) ** (1 / p))

    def trace(self, F) -> BoundaryField:
        F = np.asarray(F)
        return BoundaryField(F[:, -1, :].copy(), F[[0, -1]].copy())

    # x1 operator: D2 on interior nodes 1..n-1 has eigenvalues -4/h^2 sin^2(p pi / 2n)
    def _x1_eigs(self):
        p = np.arange(1, self.n)
        return -4.0 / self.h1**2 * np.sin(p * np.pi / (2 * self.n)) ** 2

    def _check(self, denom):
        bad = np.abs(denom) < 1e-9 * (1 + self.k**2)
        if bad.any():
            p, j = np.argwhere(bad)[0]
            raise HelmholtzResonance(f"k^2={self.k**2:.6g} hits omega_{j}^2 + x1 eigenvalue {p + 1}",
                                     int(j), int(p + 1))

    def _mode_solve(self, rhs_hat, left, right):
        """Solve (D2 + k^2 - omega_j^2) w_j = rhs_j on interior nodes with boundary values.

        rhs_hat: (n - 1, J) at interior nodes; left/right: (J,) boundary values."""
        lam = self._x1_eigs()[:, None]
        denom = lam + self.k**2 - self.basis.eigenvalues[None, :]
        self._check(denom)
        b = np.array(rhs_hat, dtype=complex)
        b[0] -= left / self.h1**2
        b[-1] -= right / self.h1**2
        B = dst(b, type=1, axis=0)
        W = idst(B / denom, type=1, axis=0)
        out = np.empty((self.n + 1,) + W.shape[1:], dtype=complex)
        out[0], out[-1], out[1:-1] = left, right, W
        return out

    def harmonic_lift(self, side):
        """Sum_m g_m(x1) r^|m| e^{i m theta}: harmonic in x' with the given side values."""
        g = self.grid
        G = np.fft.fft(side, axis=-1)
        m = np.abs(g.angular_modes())
        with np.errstate(under="ignore"):
            rad = g.r[:, None] ** m[None, :]
        return np.fft.ifft(G[:, None, :] * rad[None], axis=-1)


@dataclass(frozen=True, eq=False)
class Field3D:
    """Grid values (n + 1, N + 1, n_theta) plus the separable representation
    used for exact side normal derivatives: side data of the harmonic lift and
    eigen-coefficients (n + 1, J) of the remainder."""

    values: np.ndarray
    side: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    source: np.ndarray | None = None


def helmholtz_solve(cyl: Cylinder, f: BoundaryField) -> Field3D:
    """(d1^2 + Delta_g + k^2) v = 0 in M, v = f on the boundary."""
    H = cyl.harmonic_lift(f.side)
    h = cyl.h1
    d2H = (H[2:] - 2 * H[1:-1] + H[:-2]) / h**2
    src = -(d2H + cyl.k**2 * H[1:-1])
    basis = cyl.basis
    rhs = basis.project(src)
    cap_hat = basis.project(f.caps - H[[0, -1]])
    W = cyl._mode_solve(rhs, cap_hat[0], cap_hat[1])
    values = H + basis.synthesize(W)
    return Field3D(values, np.asarray(f.side, dtype=complex), W)


def source_solve(cyl: Cylinder, h_field) -> Field3D:
    """(d1^2 + Delta_g + k^2) w = h in M, w = 0 on the boundary (mode-wise diagonal)."""
    h_field = np.asarray(h_field)
    basis = cyl.basis
    rhs = basis.project(h_field[1:-1])
    zero = np.zeros(basis.J, dtype=complex)
    W = cyl._mode_solve(rhs, zero, zero)
    return Field3D(basis.synthesize(W), None, W, h_field)


def normal_derivative(cyl: Cylinder, v) -> BoundaryField:
    """Outward normal derivative.

    Caps of a solved field: first difference corrected by the x1 second
    derivative taken from the equation, which is second order and matches the
    trapezoid rule in Green's identity exactly.  Plain arrays get one-sided
    second-order differences.  Side: exact derivatives of the lift and
    eigen-expansion when available, otherwise the grid's radial stencil."""
    vals = v.values if isinstance(v, Field3D) else np.asarray(v)
    h = cyl.h1
    g = cyl.grid
    if isinstance(v, Field3D):
        ends = vals[[0, -1]]
        d11 = -g.laplacian(ends) - cyl.k**2 * ends
        if v.source is not None:
            d11 = d11 + np.asarray(v.source)[[0, -1]]
        cap0 = -(vals[1] - vals[0]) / h + 0.5 * h * d11[0]
        capT = (vals[-1] - vals[-2]) / h + 0.5 * h * d11[1]
    else:
        cap0 = -(-3 * vals[0] + 4 * vals[1] - vals[2]) / (2 * h)
        capT = (3 * vals[-1] - 4 * vals[-2] + vals[-3]) / (2 * h)
    if isinstance(v, Field3D) and v.coeffs is not None:
        dr = cyl.basis.synthesize_normal_derivative(v.coeffs)
        if v.side is not None:
            m = np.abs(g.angular_modes())
            dr = dr + np.fft.ifft(np.fft.fft(v.side, axis=-1) * m, axis=-1)
    else:
        dr = g.normal_derivative(vals)
    e = math.exp(-float(g.manifold.profile.phi(1.0)))
    return BoundaryField(e * dr, np.stack([cap0, capT]))


def _product(*fields):
    out = fields[0].values if isinstance(fields[0], Field3D) else fields[0]
    for f in fields[1:]:
        out = out * (f.values if isinstance(f, Field3D) else f)
    return out


def d3_lambda(cyl: Cylinder, c, f1: BoundaryField, f2: BoundaryField, f3: BoundaryField) -> BoundaryField:
    """Third derivative at zero of the DtN map: normal derivative of w with
    (d1^2 + Delta_g + k^2) w = 6 c v1 v2 v3, w = 0 on the boundary."""
    vs = [helmholtz_solve(cyl, f) for f in (f1, f2, f3)]
    w = source_solve(cyl, 6 * np.asarray(c) * _product(*vs))
    return normal_derivative(cyl, w)


def lambda_prime(cyl: Cylinder, c, f: BoundaryField) -> BoundaryField:
    """Linearized map f -> normal derivative of v with (d1^2 + Delta_g + k^2) v = c u_f^3."""
    u = helmholtz_solve(cyl, f)
    w = source_solve(cyl, np.asarray(c) * u.values**3)
    return normal_derivative(cyl, w)


def polarize(cyl: Cylinder, c, f1, f2, f3) -> BoundaryField:
    """d3_lambda recovered from seven evaluations of lambda_prime."""
    L = lambda f: lambda_prime(cyl, c, f)
    return (L(f1 + f2 + f3) - L(f1 + f2) - L(f1 + f3) - L(f2 + f3) + L(f1) + L(f2) + L(f3))


def polarization_scalar(a, b, c):
    """6abc via the same seven-term combination of cubes."""
    return (a + b + c) ** 3 - (a + b) ** 3 - (a + c) ** 3 - (b + c) ** 3 + a**3 + b**3 + c**3


def calderon_pairing(cyl: Cylinder, c, v1, v2, v3, v4, f=None):
    """(6 int_M c v1 v2 v3 v4, int_dM d3_lambda(f1, f2, f3) f4).

    ``v_j`` are grid fields (or objects with ``.values``/``.field``); their
    traces are used as boundary data unless ``f`` supplies them."""
    vals = [getattr(v, "field", getattr(v, "values", v)) for v in (v1, v2, v3, v4)]
    fs = f if f is not None else [cyl.trace(v) for v in vals]
    lhs = 6 * cyl.integrate(np.asarray(c) * vals[0] * vals[1] * vals[2] * vals[3])
    rhs = cyl.boundary_integral(d3_lambda(cyl, c, fs[0], fs[1], fs[2]), fs[3])
    return complex(lhs), complex(rhs)


def boundary_c2_norm(cyl: Cylinder, f: BoundaryField) -> float:
    """Grid sup of the trace and its first and second tangential derivatives."""
    g = cyl.grid
    h = cyl.h1
    m = g.angular_modes()
    parts = []
    for arr, r in ((f.side, np.ones(1)), (f.caps, g.r)):
        U = np.fft.fft(arr, axis=-1)
        parts.append(np.max(np.abs(arr)))
        parts.append(np.max(np.abs(np.fft.ifft(1j * m * U, axis=-1) / r[..., :, None] if arr.ndim == 3
                                   else np.abs(np.fft.ifft(1j * m * U, axis=-1)))))
        parts.append(np.max(np.abs(np.fft.ifft(-m * m * U, axis=-1) / (r[..., :, None] ** 2 if arr.ndim == 3 else 1))))
    s = f.side
    parts.append(np.max(np.abs(np.diff(s, axis=0))) / h)
    parts.append(np.max(np.abs(s[2:] - 2 * s[1:-1] + s[:-2])) / h**2)
    caps = f.caps
    if g.kind == "gauss":
        D1, D2 = g._diff
        parts.append(np.max(np.abs(np.einsum("ij,cjk->cik", D1, caps))))
        parts.append(np.max(np.abs(np.einsum("ij,cjk->cik", D2, caps))))
    else:
        dr = 2 * g.r[0]
        parts.append(np.max(np.abs(np.diff(caps, axis=1))) / dr)
        parts.append(np.max(np.abs(caps[:, 2:] - 2 * caps[:, 1:-1] + caps[:, :-2])) / dr**2)
    return float(max(parts))


def add_noise(cyl: Cylinder, data: BoundaryField, eps: float, input_norms, seed) -> BoundaryField:
    """Add complex Gaussian node noise rescaled to L^{4/3} norm eps * prod(input_norms)."""
    if eps < 0:
        raise DomainError("noise level must be non-negative")
    if eps == 0:
        return data
    rng = np.random.default_rng(seed)
    noise = BoundaryField(rng.standard_normal(data.side.shape) + 1j * rng.standard_normal(data.side.shape),
                          rng.standard_normal(data.caps.shape) + 1j * rng.standard_normal(data.caps.shape))
    target = eps * float(np.prod(input_norms))
    return data + noise * (target / cyl.lp_norm(noise, 4 / 3))


@dataclass(frozen=True, eq=False)
class Coefficient:
    """Real coefficient on the cylinder grid, vanishing near the boundary."""

    values: np.ndarray
    h1_bound: float

    @classmethod
    def from_values(cls, cyl: Cylinder, values, tol: float = 1e-10):
        values = np.asarray(values, dtype=float)
        scale = max(np.max(np.abs(values)), 1e-300)
        edge = max(np.max(np.abs(values[[0, -1]])), np.max(np.abs(values[:, -1, :])))
        if edge > tol * scale:
            raise DomainError("coefficient must vanish on the boundary")
        return cls(values, h1_norm(cyl, values))


def h1_norm(cyl: Cylinder, F) -> float:
    """Discrete H^1 norm: L2 norm plus x1 differences and the transversal Dirichlet energy."""
    F = np.asarray(F)
    w = cyl.x1_weights()
    l2 = cyl.integrate(np.abs(F) ** 2)
    dx = np.diff(F, axis=0) / cyl.h1
    gx = np.sum(cyl.h1 * cyl.grid.integrate(np.abs(dx) ** 2))
    gt = np.sum(w * cyl.grid.dirichlet_energy(F))
    return float(np.sqrt(l2 + gx + gt))

"""Polar discretizations of the transversal disk and the Dirichlet eigensystem.

Two radial discretizations share one interface; the angular direction is
always Fourier-exact on ``n_theta`` equispaced angles.

``fv``: cell-centred nodes r_i = (i - 1/2) dr, dr = 1 / (N + 1/2), and a
conservative second-order finite-volume stencil.  Cheap, O(h^2).

``gauss``: Gauss-Legendre nodes in r and a Galerkin eigensolver whose radial
trial functions for angular wavenumber m are r^m (1 - r^2) P_k(2 r^2 - 1)
with Jacobi polynomials P_k = P_k^(2, m).  Spectrally accurate; needed when
the eigenfunctions oscillate on the scale of the grid (high wavenumbers).

Fields are arrays of shape (..., N + 1, n_theta); the last radial row is the
boundary circle r = 1.  Because the metric is radial, eigenfunctions are
u(r) cos(m theta) / sqrt(pi), u(r) sin(m theta) / sqrt(pi), or
u(r) / sqrt(2 pi) for m = 0.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.special import eval_jacobi, roots_jacobi, roots_legendre

from .errors import DomainError, SolverFailure
from .geometry import TransversalManifold

CACHE_VERSION = 1


def _bary_diff(nodes):
    """First-derivative matrix for polynomial interpolation on ``nodes``."""
    x = np.asarray(nodes, dtype=float)
    n = len(x)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    w = 1.0 / np.prod(dx, axis=1)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@dataclass(frozen=True, eq=False)
class Grid:
    manifold: TransversalManifold
    r_nodes: np.ndarray
    r_weights: np.ndarray
    n_theta: int
    kind: str = "fv"
    ring_weight: float = 0.0

    @property
    def n_r(self) -> int:
        return len(self.r_nodes)

    @property
    def h(self) -> float:
        """Largest radial gap (including the gap to the boundary)."""
        return float(np.max(np.diff(np.concatenate([[0.0], self.r]))))

    @cached_property
    def r(self) -> np.ndarray:
        """Radii of all rows including the boundary row r = 1."""
        return np.concatenate([self.r_nodes, [1.0]])

    @cached_property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    @cached_property
    def points(self) -> np.ndarray:
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        return np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)

    @cached_property
    def conformal(self) -> np.ndarray:
        """exp(2 phi) per row."""
        return np.exp(2 * self.manifold.profile.phi(self.r**2))

    @cached_property
    def radial_mass(self) -> np.ndarray:
        """Interior-row radial quadrature weights for r exp(2 phi) dr."""
        return self.r_weights * self.conformal[:-1]

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights for the Riemannian volume form, shape (N + 1, n_theta)."""
        dth = 2 * np.pi / self.n_theta
        w = np.empty((self.n_r + 1, self.n_theta))
        w[:-1] = (self.radial_mass * dth)[:, None]
        w[-1] = self.ring_weight * self.conformal[-1] * dth
        return w

    @cached_property
    def boundary(self) -> np.ndarray:
        b = np.zeros((self.n_r + 1, self.n_theta), dtype=bool)
        b[-1] = True
        return b

    @property
    def boundary_weight(self) -> float:
        """Arclength weight of a boundary node for the induced metric."""
        return 2 * np.pi / self.n_theta * math.exp(float(self.manifold.profile.phi(1.0)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r + 1, self.n_theta)

    def integrate(self, f):
        return np.sum(f * self.weights, axis=(-2, -1))

    def l2(self, f):
        return np.sqrt(self.integrate(np.abs(f) ** 2))

    def key(self) -> str:
        p = self.manifold.profile
        s = f"disk|{p.family}|{p.amplitude!r}|{p.width!r}|{self.kind}|{self.n_r}|{self.n_theta}"
        return hashlib.sha256(s.encode()).hexdigest()[:16]

    def angular_modes(self) -> np.ndarray:
        return np.fft.fftfreq(self.n_theta, 1.0 / self.n_theta)

    @cached_property
    def _diff(self):
        D1 = _bary_diff(self.r)
        return D1, D1 @ D1

    def _angular_second(self, u):
        m2 = self.angular_modes() ** 2
        ang = np.fft.ifft(-m2 * np.fft.fft(u, axis=-1), axis=-1)
        return ang if np.iscomplexobj(u) else ang.real

    def laplacian(self, u):
        """Discrete Laplace-Beltrami operator on interior rows; the boundary
        row of ``u`` supplies Dirichlet values, the boundary row of the result is 0."""
        u = np.asarray(u)
        r = self.r[:-1, None]
        ui = u[..., :-1, :]
        if self.kind == "fv":
            dr = self.r[0] * 2
            rp, rm = r + 0.5 * dr, r - 0.5 * dr
            up = u[..., 1:, :]
            um = np.concatenate([np.zeros_like(u[..., :1, :]), u[..., :-2, :]], axis=-2)
            rad = (rp * (up - ui) - rm * (ui - um)) / (dr * dr * r)
        else:
            D1, D2 = self._diff
            d1 = np.einsum("ij,...jk->...ik", D1[:-1], u)
            d2 = np.einsum("ij,...jk->...ik", D2[:-1], u)
            rad = d2 + d1 / r
        out = np.zeros(u.shape, dtype=np.result_type(u, float))
        out[..., :-1, :] = (rad + self._angular_second(ui) / r**2) / self.conformal[:-1, None]
        return out

    def dirichlet_energy(self, u):
        """Integral of |grad u|_g^2 dV, from radial differences and the Fourier derivative."""
        u = np.asarray(u)
        dth = 2 * np.pi / self.n_theta
        m = self.angular_modes()
        dth_u = np.fft.ifft(1j * m * np.fft.fft(u[..., :-1, :], axis=-1), axis=-1)
        r = self.r[:-1]
        ang = np.sum(np.abs(dth_u) ** 2 / r[:, None] ** 2 * (self.r_weights * dth)[:, None], axis=(-2, -1))
        if self.kind == "fv":
            dr = self.r[0] * 2
            du = np.diff(u, axis=-2) / dr
            rp = r + 0.5 * dr
            rad = np.sum(np.abs(du) ** 2 * (rp * dr * dth)[:, None], axis=(-2, -1))
        else:
            D1, _ = self._diff
            du = np.einsum("ij,...jk->...ik", D1[:-1], u)
            rad = np.sum(np.abs(du) ** 2 * (self.r_weights * dth)[:, None], axis=(-2, -1))
        return rad + ang

    def normal_derivative(self, u):
        """d/dr at r = 1 per angle: second-order one-sided on ``fv`` grids,
        interpolation-exact on ``gauss`` grids."""
        u = np.asarray(u)
        if self.kind == "fv":
            dr = self.r[0] * 2
            return (3 * u[..., -1, :] - 4 * u[..., -2, :] + u[..., -3, :]) / (2 * dr)
        D1, _ = self._diff
        return np.einsum("j,...jk->...k", D1[-1], u)


def build_grid(M0: TransversalManifold, h: float, kind: str = "fv", n_theta: int | None = None) -> Grid:
    """Polar grid with radial spacing about ``h`` and boundary arc spacing <= h."""
    if not h > 0:
        raise DomainError("grid spacing h must be positive")
    if n_theta is None:
        n_theta = 2 * int(math.ceil(math.pi / h))
    if kind == "fv":
        n_r = max(4, int(round(1.0 / h - 0.5)))
        dr = 1.0 / (n_r + 0.5)
        r = (np.arange(1, n_r + 1) - 0.5) * dr
        ring = 0.5 * (1.0 - (n_r * dr) ** 2)
        return Grid(M0, r, r * dr, n_theta, "fv", ring)
    if kind == "gauss":
        n_r = max(4, int(math.ceil(1.0 / h)))
        x, w = roots_legendre(n_r)
        r = 0.5 * (x + 1)
        return Grid(M0, r, 0.5 * w * r, n_theta, "gauss", 0.0)
    raise DomainError(f"unknown grid kind {kind!r}")


def band_grid(M0: TransversalManifold, omega_max: float) -> Grid:
    """``gauss`` grid sized to resolve eigenfunctions with eigenvalue <= omega_max^2."""
    n_r = int(math.ceil(1.7 * omega_max + 16))
    n_theta = 2 * int(math.ceil(1.25 * omega_max + 12))
    x, w = roots_legendre(n_r)
    r = 0.5 * (x + 1)
    return Grid(M0, r, 0.5 * w * r, n_theta, "gauss", 0.0)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Dirichlet eigenpairs sorted by eigenvalue.

    ``m`` and ``kind`` (0 = cos, 1 = sin) identify the angular factor;
    ``vectors[m]`` holds radial eigenfunction values on the grid rows (columns
    orthonormal in the radial quadrature) and ``column`` gives each mode's
    column there.  ``edge[m]`` holds du/dr at r = 1.
    """

    grid: Grid
    eigenvalues: np.ndarray
    m: np.ndarray
    kind: np.ndarray
    column: np.ndarray
    vectors: dict
    edge: dict

    @property
    def J(self) -> int:
        return len(self.eigenvalues)

    @cached_property
    def _groups(self):
        out = []
        for mm in sorted(self.vectors):
            for kd in (0, 1):
                sel = np.flatnonzero((self.m == mm) & (self.kind == kd))
                if len(sel):
                    cols = self.column[sel]
                    out.append((mm, kd, sel, self.vectors[mm][:, cols], self.edge[mm][cols]))
        return out

    @staticmethod
    def _ang_norm(mm):
        return 1.0 / math.sqrt(2 * math.pi) if mm == 0 else 1.0 / math.sqrt(math.pi)

    def project(self, f):
        """Coefficients of f (..., N + 1, n_theta) against each mode, shape (..., J)."""
        f = np.asarray(f)
        g = self.grid
        F = np.fft.fft(f[..., :-1, :], axis=-1) * (2 * np.pi / g.n_theta)
        mass = g.radial_mass
        out = np.zeros(f.shape[:-2] + (self.J,), dtype=np.result_type(f, float))
        for mm, kd, sel, U, _ in self._groups:
            Fp, Fm = F[..., :, mm], F[..., :, -mm]
            if kd == 0:
                a = 0.5 * (Fp + Fm) if mm else Fp
            else:
                a = (Fm - Fp) / 2j
            if not np.iscomplexobj(f):
                a = a.real
            out[..., sel] = self._ang_norm(mm) * (a * mass) @ U
        return out

    def _angular_spectrum(self, coeffs, radial):
        g = self.grid
        G = None
        for mm, kd, sel, U, E in self._groups:
            R = radial(U, E)
            prof = self._ang_norm(mm) * (coeffs[..., sel] @ R.T)
            if G is None:
                G = np.zeros(prof.shape[:-1] + (prof.shape[-1], g.n_theta), dtype=complex)
            if mm == 0:
                G[..., :, 0] += prof
            elif kd == 0:
                G[..., :, mm] += 0.5 * prof
                G[..., :, -mm] += 0.5 * prof
            else:
                G[..., :, mm] += prof / 2j
                G[..., :, -mm] -= prof / 2j
        f = np.fft.ifft(G, axis=-1) * g.n_theta
        return f if np.iscomplexobj(coeffs) else f.real

    def synthesize(self, coeffs):
        """Field (..., N + 1, n_theta) from coefficients (..., J); boundary row zero."""
        coeffs = np.asarray(coeffs)
        f = self._angular_spectrum(coeffs, lambda U, E: U)
        out = np.zeros(coeffs.shape[:-1] + self.grid.shape, dtype=f.dtype)
        out[..., :-1, :] = f
        return out

    def synthesize_normal_derivative(self, coeffs):
        """d/dr at r = 1 of the synthesized field, per angle (exact for the basis)."""
        coeffs = np.asarray(coeffs)
        return self._angular_spectrum(coeffs, lambda U, E: E[None, :])[..., 0, :]

    def mode(self, j):
        e = np.zeros(self.J)
        e[j] = 1.0
        return self.synthesize(e)

    def save(self, path) -> None:
        arrays = {f"vec_{mm}": v for mm, v in self.vectors.items()}
        arrays.update({f"edge_{mm}": v for mm, v in self.edge.items()})
        with open(path, "wb") as fh:
            np.savez(fh, version=CACHE_VERSION, key=self.grid.key(), eigenvalues=self.eigenvalues,
                     m=self.m, kind=self.kind, column=self.column, **arrays)

    @classmethod
    def load(cls, path, grid: Grid) -> "SpectralBasis":
        with np.load(path) as d:
            if int(d["version"]) != CACHE_VERSION or str(d["key"]) != grid.key():
                raise SolverFailure("basis cache does not match grid")
            vectors = {int(k[4:]): d[k] for k in d.files if k.startswith("vec_")}
            edge = {int(k[5:]): d[k] for k in d.files if k.startswith("edge_")}
            return cls(grid, d["eigenvalues"], d["m"], d["kind"], d["column"], vectors, edge)


def radial_operator(grid: Grid, m: int):
    """Diagonal and off-diagonal of the symmetric finite-volume stiffness matrix."""
    r = grid.r_nodes
    dr = 2 * r[0]
    rp, rm = r + 0.5 * dr, r - 0.5 * dr
    diag = (rp + rm) / dr + m * m * dr / r
    off = -rp[:-1] / dr
    return diag, off


def _fv_radial(grid: Grid, m: int, omega2_max: float):
    diag, off = radial_operator(grid, m)
    s = 1.0 / np.sqrt(grid.radial_mass)
    try:
        if np.isinf(omega2_max):
            w, v = eigh_tridiagonal(diag * s * s, off * s[:-1] * s[1:])
        else:
            w, v = eigh_tridiagonal(diag * s * s, off * s[:-1] * s[1:], select="v",
                                    select_range=(-np.inf, omega2_max))
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"radial eigensolve failed for m={m}") from exc
    U = v * s[:, None]
    dr = 2 * grid.r_nodes[0]
    edge = (-4 * U[-1] + U[-2]) / (2 * dr) if len(U) > 1 else np.zeros(U.shape[1])
    return w, U, edge, True


def _galerkin_matrices(grid: Grid, m: int, K: int):
    prof = grid.manifold.profile
    Q = K + 24
    if m == 0:
        x, w = roots_legendre(Q)
    else:
        x, w = roots_jacobi(Q, 0.0, m - 1.0)
        w = w / np.max(w)
    k = np.arange(K)
    P = eval_jacobi(k[None, :], 2.0, float(m), x[:, None])
    dP = np.zeros_like(P)
    dP[:, 1:] = 0.5 * (k[1:] + 3.0 + m) * eval_jacobi(k[None, 1:] - 1, 3.0, m + 1.0, x[:, None])
    q = (1 - x)[:, None] * P
    dq = -P + (1 - x)[:, None] * dP
    rho = 0.5 * (1 + x)
    conf = np.exp(2 * prof.phi(rho))
    if m == 0:
        A = 2 * (dq * ((1 + x) * w)[:, None]).T @ dq
        M = 0.25 * (q * (conf * w)[:, None]).T @ q
    else:
        p = 0.5 * m * q + (1 + x)[:, None] * dq
        A = 2 * (p * w[:, None]).T @ p + 0.5 * m * m * (q * w[:, None]).T @ q
        M = 0.25 * (q * ((1 + x) * conf * w)[:, None]).T @ q
    d = 1.0 / np.sqrt(np.diag(M))
    return A * d[:, None] * d[None, :], M * d[:, None] * d[None, :], d


def _galerkin_basis_values(grid: Grid, m: int, K: int, d):
    """Trial functions (scaled by d) at grid rows, and their r-derivative at r = 1,
    with the same overall scale as the Galerkin matrices."""
    r = grid.r
    x = 2 * r**2 - 1
    k = np.arange(K)
    P = eval_jacobi(k[None, :], 2.0, float(m), x[:, None])
    # the quadrature weights were divided by max(w); match that scale in the values
    if m == 0:
        scale = 1.0
    else:
        _, w = roots_jacobi(K + 24, 0.0, m - 1.0)
        scale = 1.0 / math.sqrt(np.max(w))
    with np.errstate(under="ignore", divide="ignore"):
        rm = np.exp(m * np.log(np.sqrt(2.0) * np.maximum(r, 1e-300))) if m else np.ones_like(r)
    B = (rm * (1 - x))[:, None] * P * d[None, :] * scale
    edge = -4.0 * 2.0 ** (m / 2) * eval_jacobi(k, 2.0, float(m), 1.0) * d * scale
    return B, edge


def _gauss_radial(grid: Grid, m: int, omega2_max: float):
    K = int(np.clip(2.5 * math.sqrt(max(omega2_max, 0.0)) / math.pi + 24, 24, 300))
    A, M, d = _galerkin_matrices(grid, m, K)
    lam, V = eigh(A, M)
    A2, M2, _ = _galerkin_matrices(grid, m, K - 8)
    lam2 = eigh(A2, M2, eigvals_only=True)
    n2 = len(lam2)
    conv = np.zeros(len(lam), dtype=bool)
    conv[:n2] = np.abs(lam2 - lam[:n2]) <= 1e-9 * np.abs(lam[:n2])
    # converged prefix only
    nconv = int(np.argmin(conv)) if not conv.all() else len(conv)
    sel = lam <= omega2_max
    nsel = int(np.sum(sel))
    complete = nsel < nconv or (nconv == len(lam))
    nuse = min(nsel, nconv)
    B, edge_b = _galerkin_basis_values(grid, m, K, d)
    U = B[:-1] @ V[:, :nuse]
    edge = edge_b @ V[:, :nuse]
    # orthonormality in the grid quadrature; keep the largest accurate prefix
    G = (U * grid.radial_mass[:, None]).T @ U
    err = np.abs(G - np.eye(nuse))
    n_ok = nuse
    for n in range(nuse):
        if err[n, : n + 1].max() > 1e-7:
            n_ok = n
            break
    if n_ok < nuse:
        complete = False
        U, edge, lam = U[:, :n_ok], edge[:n_ok], lam[:n_ok]
        G = G[:n_ok, :n_ok]
        nuse = n_ok
    if nuse:
        ev, Q = np.linalg.eigh(G)
        T = Q @ np.diag(ev**-0.5) @ Q.T
        U, edge = U @ T, edge @ T
    return lam[:nuse], U, edge, complete


def dirichlet_eigensystem(grid: Grid, J: int | None = None, omega2_max: float | None = None,
                          max_fraction: float = 0.1) -> SpectralBasis:
    """Lowest ``J`` Dirichlet eigenpairs, or all with eigenvalue <= ``omega2_max``.

    Degenerate cos/sin pairs are kept whole, so a ``J`` request may return J + 1.
    Raises SolverFailure if the grid cannot resolve the requested band.
    """
    if (J is None) == (omega2_max is None):
        raise DomainError("give exactly one of J and omega2_max")
    n_int = grid.n_r * grid.n_theta
    if J is not None:
        if J < 1 or J > max_fraction * n_int:
            raise DomainError(f"J={J} outside [1, {max_fraction} * interior nodes]")
        area = float(np.sum(grid.weights))
        bound = 4 * math.pi * J / area * 1.3 + 30.0
        while True:
            basis = _eigensystem_band(grid, bound)
            if basis.J >= J:
                return _truncate(basis, J)
            bound *= 1.6
    return _eigensystem_band(grid, float(omega2_max))


def _eigensystem_band(grid: Grid, omega2_max: float) -> SpectralBasis:
    m_cap = grid.n_theta // 2 - 1
    solver = _fv_radial if grid.kind == "fv" else _gauss_radial
    vals, ms, kinds, cols, vectors, edges = [], [], [], [], {}, {}
    for mm in range(m_cap + 2):
        if mm > m_cap:
            if np.isinf(omega2_max):
                break
            raise SolverFailure("angular resolution too coarse for the requested band")
        lam, U, edge, complete = solver(grid, mm, omega2_max)
        if not complete:
            raise SolverFailure(f"radial resolution too coarse for the requested band at m={mm}")
        if len(lam) == 0:
            break
        vectors[mm], edges[mm] = U, edge
        for i, lv in enumerate(lam):
            for kd in ((0,) if mm == 0 else (0, 1)):
                vals.append(lv); ms.append(mm); kinds.append(kd); cols.append(i)
    vals, ms, kinds, cols = map(np.asarray, (vals, ms, kinds, cols))
    order = np.lexsort((kinds, cols, ms, vals))
    return SpectralBasis(grid, vals[order], ms[order], kinds[order], cols[order], vectors, edges)


def _truncate(basis: SpectralBasis, J: int) -> SpectralBasis:
    ms, cols = basis.m, basis.column
    keep = J
    while keep < basis.J and ms[keep] == ms[keep - 1] and cols[keep] == cols[keep - 1] and ms[keep] > 0:
        keep += 1
    used = set(int(x) for x in ms[:keep])
    return SpectralBasis(basis.grid, basis.eigenvalues[:keep], ms[:keep], basis.kind[:keep], cols[:keep],
                         {m: v for m, v in basis.vectors.items() if m in used},
                         {m: v for m, v in basis.edge.items() if m in used})


def cached_eigensystem(grid: Grid, cache_dir, J: int | None = None, omega2_max: float | None = None):
    """``dirichlet_eigensystem`` behind an on-disk cache keyed by grid, metric and request."""
    tag = f"J{J}" if J is not None else f"w{omega2_max!r}"
    path = Path(cache_dir) / f"basis_{grid.key()}_{hashlib.sha256(tag.encode()).hexdigest()[:8]}.npz"
    if path.exists():
        try:
            return SpectralBasis.load(path, grid)
        except (SolverFailure, KeyError, ValueError, OSError):
            pass
    basis = dirichlet_eigensystem(grid, J=J, omega2_max=omega2_max)
    path.parent.mkdir(parents=True, exist_ok=True)
    basis.save(path)
    return basis

"""Fourier-slice recovery of the coefficient from four-CGO pairings.

Two beams crossing at y0 (one carrying the frequency lambda, one at lambda = 0)
and their conjugate partners multiply to exp(-2 i lambda x1) |v|^2 |w|^2, a
Gaussian concentrated at y0.  The pairing with c therefore samples the x1
Fourier transform of c at (2 lambda, y0) after dividing by the same quadrature
run with the transform replaced by 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import dtn
from .cylinder import CGOSolution, LineGrid, assemble_cgo
from .errors import CalibrationDegenerate, CGOError, DomainError, NoValidPair, Resonance, TangentialExit
from .geometry import TransversalManifold, build_fermi_chart, diameter, shoot_geodesic
from .quasimode import QuasimodeConfig, SpectralParameter, make_beam, make_spectral_parameter
from .spectral import band_grid, dirichlet_eigensystem

MIN_ANGLE_DEG = 30.0
# slice error budget C * varsigma^(-1/2) * exp(sigma |lambda|); C fitted on the flat
# reference bump at varsigma = 10..80 (largest observed error ratio, rounded up)
SLICE_BUDGET_C = 1.0
# |b0| >= B0_FLOOR * exp(-sigma |lambda|)
B0_FLOOR = 1e-3
BAND_MARGIN = 25.0


def sigma_for(M0: TransversalManifold) -> float:
    return math.sqrt(5.0) * diameter(M0)


@dataclass(frozen=True)
class Schedule:
    case: int
    tau: float
    lambda_window: float
    E: float


def parameter_schedule(k: float, eps: float, sigma: float, D: float) -> Schedule:
    """Case 1 (k > E): tau = 1, window log k / (2 sigma).
    Case 2: tau = E / (2 D), window log(k^2 + E^2) / (4 sigma)."""
    if not 0 < eps < 1:
        raise DomainError("noise level must lie in (0, 1)")
    if not k > 1:
        raise DomainError("wavenumber must exceed 1")
    if not (sigma > 0 and D > 0):
        raise DomainError("sigma and D must be positive")
    E = -math.log(eps)
    if k > E:
        return Schedule(1, 1.0, math.log(k) / (2 * sigma), E)
    return Schedule(2, E / (2 * D), math.log(k * k + E * E) / (4 * sigma), E)


def noiseless_schedule(k: float, sigma: float) -> Schedule:
    """Exact data: the Case 1 formulas (no noise level to balance)."""
    if not k > 1:
        raise DomainError("wavenumber must exceed 1")
    return Schedule(1, 1.0, math.log(k) / (2 * sigma), math.inf)


def guard_tau(tau: float, k: float, omega2, rel_tol: float = 1e-6, step: float = 1e-3, tries: int = 50) -> float:
    """Smallest upward nudge tau (1 + j step) clear of tau^2 = omega_j^2 - k^2."""
    om = np.asarray(omega2, dtype=float)
    for j in range(tries):
        t = tau * (1 + j * step)
        gap = np.abs(t * t - (om - k * k))
        if not np.any((om > k * k) & (gap < rel_tol * (1 + t * t))):
            return t
    raise Resonance("no resonance-free tau near the scheduled value", tau=tau, k=k)


@dataclass(frozen=True, eq=False)
class GeodesicPair:
    gamma: object
    eta: object
    y0: np.ndarray
    angle: float


def _min_separation(g1, g2, y0, exclude):
    a = g1.x[(g1.t >= 0) & (g1.t <= g1.length)]
    b = g2.x[(g2.t >= 0) & (g2.t <= g2.length)]
    a = a[np.linalg.norm(a - y0, axis=1) > exclude]
    b = b[np.linalg.norm(b - y0, axis=1) > exclude]
    if len(a) == 0 or len(b) == 0:
        return math.inf
    d, _ = cKDTree(b).query(a)
    return float(np.min(d))


def pick_geodesics(M0: TransversalManifold, y0, min_angle: float = MIN_ANGLE_DEG, n_probe: int = 12,
                   extend: float = 1.0, h: float = 1e-3) -> GeodesicPair:
    """Two geodesics through the interior point y0 crossing at >= min_angle degrees,
    both transversal at the boundary and meeting nowhere else."""
    y0 = np.asarray(y0, dtype=float)
    if not float(np.hypot(*y0)) < M0.radius:
        raise DomainError("y0 must be an interior point")
    # orthogonal pairs first, then narrower crossings down to min_angle
    offsets = [90.0] + [a for a in np.linspace(90, min_angle, 5)[1:]]
    for off in offsets:
        for i in range(n_probe):
            a1 = math.pi * i / n_probe
            a2 = a1 + math.radians(off)
            try:
                g1 = shoot_geodesic(M0, y0, (math.cos(a1), math.sin(a1)), h=h, extend=extend)
                g2 = shoot_geodesic(M0, y0, (math.cos(a2), math.sin(a2)), h=h, extend=extend)
            except TangentialExit:
                continue
            if not (all(g1.endpoint_transversality) and all(g2.endpoint_transversality)):
                continue
            # the conformal factor preserves angles, so the Euclidean angle is the metric one
            i1 = np.argmin(np.linalg.norm(g1.x - y0, axis=1))
            i2 = np.argmin(np.linalg.norm(g2.x - y0, axis=1))
            cosang = abs(float(np.dot(g1.v[i1], g2.v[i2]) / (np.linalg.norm(g1.v[i1]) * np.linalg.norm(g2.v[i2]))))
            angle = math.degrees(math.acos(min(cosang, 1.0)))
            if angle < min_angle - 1e-9:
                continue
            spacing = max(np.max(np.linalg.norm(np.diff(g1.x, axis=0), axis=1)),
                          np.max(np.linalg.norm(np.diff(g2.x, axis=0), axis=1)))
            tol = 4 * spacing
            exclude = 4 * tol / math.sin(math.radians(angle))
            if _min_separation(g1, g2, y0, exclude) > tol:
                return GeodesicPair(g1, g2, y0, angle)
    raise NoValidPair(f"no admissible geodesic pair through {tuple(y0)}")


def laplace_average(b, z0, varsigma: float, n_nodes: int = 40) -> float:
    """(varsigma / pi)^(d/2) * int b(z) exp(-varsigma |z - z0|^2) dz by tensor Gauss-Hermite."""
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    d = len(z0)
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    pts = z0 + np.stack([g.ravel() for g in grids], axis=-1) / math.sqrt(varsigma)
    wts = np.prod(np.meshgrid(*([w] * d), indexing="ij"), axis=0).ravel()
    return np.sum(wts * b(pts)) / math.pi ** (d / 2)


@dataclass(frozen=True, eq=False)
class CGOQuadruple:
    v1: CGOSolution
    v2: CGOSolution
    v3: CGOSolution
    v4: CGOSolution
    pair: GeodesicPair

    @property
    def fields(self):
        return (self.v1, self.v2, self.v3, self.v4)


def eta_pair(pair: GeodesicPair, sp: SpectralParameter, basis, line: LineGrid, qcfg: QuasimodeConfig):
    """(v3, v4) on the second geodesic: exp(-tau x1)(w + r3), exp(tau x1)(conj w + r4)."""
    sp0 = make_spectral_parameter(sp.k, sp.tau, 0.0)
    beam = make_beam(build_fermi_chart(pair.eta, qcfg.delta), sp0, qcfg)
    return assemble_cgo(-1, False, sp0, beam, basis, line), assemble_cgo(1, True, sp0, beam, basis, line)


def build_quadruple(pair: GeodesicPair, sp: SpectralParameter, basis, line: LineGrid, qcfg: QuasimodeConfig,
                    etas=None) -> CGOQuadruple:
    """v1 = exp(-(tau + i lam) x1)(v + r1), v2 = exp((tau - i lam) x1)(conj v + r2) on the first
    geodesic, and the lambda = 0 pair on the second."""
    beam = make_beam(build_fermi_chart(pair.gamma, qcfg.delta), sp, qcfg)
    v1 = assemble_cgo(-1, False, sp, beam, basis, line)
    v2 = assemble_cgo(1, True, sp, beam, basis, line)
    v3, v4 = etas if etas is not None else eta_pair(pair, sp, basis, line, qcfg)
    return CGOQuadruple(v1, v2, v3, v4, pair)


def cylinder_of(quad: CGOQuadruple) -> dtn.Cylinder:
    return dtn.Cylinder(quad.v1.basis, quad.v1.line, quad.v1.sp.k)


def interior_pairing(quad: CGOQuadruple, c_values) -> complex:
    """int_M c v1 v2 v3 v4 dV (one sixth of the Calderon boundary pairing)."""
    cyl = cylinder_of(quad)
    prod = quad.v1.field * quad.v2.field * quad.v3.field * quad.v4.field
    return complex(cyl.integrate(c_values * prod))


def noise_pairing(quad: CGOQuadruple, eps: float, seed) -> complex:
    """One sixth of int_dM N f4 for a noise field N of L^{4/3} norm eps * prod ||f_j||_{C^2}."""
    if eps == 0:
        return 0j
    cyl = cylinder_of(quad)
    fs = [cyl.trace(v.field) for v in quad.fields]
    norms = [dtn.boundary_c2_norm(cyl, f) for f in fs[:3]]
    zero = dtn.BoundaryField.zeros(quad.v1.basis, quad.v1.line)
    noise = dtn.add_noise(cyl, zero, eps, norms, seed)
    return complex(cyl.boundary_integral(noise, fs[3]) / 6)


def phase_hessian(beam, y0, step: float = 1e-3) -> np.ndarray:
    """Hessian of Im Theta at y0 by central differences."""
    y0 = np.asarray(y0, dtype=float)
    e = np.eye(2) * step
    f = lambda p: np.imag(beam.parts(np.asarray(p)[None])[0][0])
    H = np.empty((2, 2))
    f0 = f(y0)
    for i in range(2):
        H[i, i] = (f(y0 + e[i]) - 2 * f0 + f(y0 - e[i])) / step**2
    H[0, 1] = H[1, 0] = (f(y0 + e[0] + e[1]) - f(y0 + e[0] - e[1]) - f(y0 - e[0] + e[1])
                         + f(y0 - e[0] - e[1])) / (4 * step**2)
    return H


@dataclass(frozen=True)
class CalibrationFactor:
    b0: complex
    B0_eval: float
    hessian: np.ndarray = field(repr=False)
    varsigma: float = 0.0
    lam: float = 0.0

    def analytic(self, weight_at_y0: float, conformal: float) -> float:
        """Laplace value varsigma^(1/2) W(y0) e^{2 phi} pi / (varsigma sqrt det H)."""
        return math.sqrt(self.varsigma) * weight_at_y0 * conformal * math.pi / (
            self.varsigma * math.sqrt(np.linalg.det(self.hessian)))


def calibrate_b0(quad: CGOQuadruple, sigma: float, floor: float = B0_FLOOR) -> CalibrationFactor:
    """b0 = varsigma^(1/2) int_M0 v conj(v) w conj(w) dV: the slice quadrature with the
    transform of c replaced by 1."""
    sp = quad.v1.sp
    grid = quad.v1.grid
    W = quad.v1.v * quad.v2.v * quad.v3.v * quad.v4.v
    vs = sp.varsigma
    b0 = complex(math.sqrt(vs) * grid.integrate(W))
    y0 = quad.pair.y0
    bg, be = quad.v1.beam, quad.v3.beam
    Hs = phase_hessian(bg if not bg.conjugate else bg.conj(), y0) + phase_hessian(
        be if not be.conjugate else be.conj(), y0)
    if not np.all(np.linalg.eigvalsh(Hs) > 0):
        raise CalibrationDegenerate("phase Hessian at y0 is not positive definite")
    Wy = abs(complex(bg(y0[None])[0] * quad.v2.beam(y0[None])[0] * be(y0[None])[0] * quad.v4.beam(y0[None])[0]))
    B0 = Wy / vs ** ((bg.cfg.n - 2) / 4)
    if abs(b0) < floor * math.exp(-sigma * abs(sp.lam)):
        raise CalibrationDegenerate(f"|b0| = {abs(b0):.3g} below the floor")
    return CalibrationFactor(b0, float(B0), Hs, vs, sp.lam)


def slice_budget(varsigma: float, sigma: float, lam: float, C: float = SLICE_BUDGET_C) -> float:
    return C * varsigma**-0.5 * math.exp(sigma * abs(lam))


def fourier_slice(pairing: complex, calib: CalibrationFactor, sigma: float) -> tuple[complex, float]:
    """(estimate of c^(2 lambda, y0), error budget)."""
    if calib.b0 == 0:
        raise CalibrationDegenerate("zero calibration factor")
    value = math.sqrt(calib.varsigma) * pairing / calib.b0
    return complex(value), slice_budget(calib.varsigma, sigma, calib.lam)


def _bump(u):
    out = np.zeros_like(u, dtype=float)
    m = np.abs(u) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - u[m] ** 2))
    return out


@dataclass(frozen=True)
class SmoothBump:
    """c(x1, x') = amplitude * bump((x1 - x1c) / w1) * bump(|x' - center| / radius),
    with bump(u) = exp(1 - 1 / (1 - u^2)) on |u| < 1."""

    amplitude: float = 1.0
    x1c: float = 0.5
    w1: float = 0.4
    center: tuple = (0.0, 0.0)
    radius: float = 0.8

    def axial(self, x1):
        return _bump((np.asarray(x1, dtype=float) - self.x1c) / self.w1)

    def transversal(self, pts):
        pts = np.asarray(pts, dtype=float)
        d = np.hypot(pts[..., 0] - self.center[0], pts[..., 1] - self.center[1])
        return _bump(d / self.radius)

    def __call__(self, x1, pts):
        x1 = np.asarray(x1, dtype=float)
        return self.amplitude * self.axial(x1)[:, None, None] * self.transversal(pts)[None]

    def on(self, line: LineGrid, grid):
        return self(line.x_inner, grid.points)

    def fourier(self, two_lam, pts, n: int = 2001, T: float = 1.0):
        """c^(xi, x') = int_0^T exp(-i xi x1) c dx1 by Simpson-weighted quadrature."""
        x = np.linspace(0, T, n)
        w = np.full(n, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= (T / (n - 1)) / 3
        xi = np.atleast_1d(np.asarray(two_lam, dtype=float))
        ax = (w * self.axial(x)) @ np.exp(-1j * np.outer(x, xi))
        return self.amplitude * ax[:, None] * self.transversal(pts).ravel()[None, :] if np.ndim(pts) > 1 \
            else self.amplitude * ax * self.transversal(pts)


def y0_lattice(M0: TransversalManifold, spacing: float, margin: float):
    """Interior lattice points with |y| <= radius - margin and cell weights spacing^2 e^{2 phi}."""
    n = int(math.floor((M0.radius - margin) / spacing + 1e-9))
    g = np.arange(-n, n + 1) * spacing
    X, Y = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= M0.radius - margin + 1e-12]
    if len(pts) == 0:
        raise DomainError("empty y0 lattice: margin too large for the spacing")
    w = spacing**2 * np.exp(2 * M0.phi(pts))
    return pts, w


def lambda_nodes(window: float, n: int):
    """Gauss-Legendre nodes and weights on [-window, window]."""
    if n < 1:
        raise DomainError("need at least one lambda node")
    x, w = np.polynomial.legendre.leggauss(n)
    return window * x, window * w


@dataclass(frozen=True, eq=False)
class FourierSlice:
    """Estimates c^(2 lambda, y0) on the (y0, lambda) grid with per-point budgets."""

    y0s: np.ndarray
    lambdas: np.ndarray
    values: np.ndarray          # (P, L)
    budget: np.ndarray          # (P, L)
    lambda_weights: np.ndarray
    window: float

    def conjugate_defect(self):
        """|c^(-2 lambda) - conj c^(2 lambda)| against twice the budget, per mirrored pair."""
        L = len(self.lambdas)
        d = np.abs(self.values - np.conj(self.values[:, ::-1]))
        return d[:, : (L + 1) // 2], 2 * self.budget[:, : (L + 1) // 2]


def invert_fourier(sl: FourierSlice, x1):
    """c(x1, y0) = (1 / pi) int_{-W}^{W} c^(2 lambda, y0) exp(2 i lambda x1) d lambda, real part."""
    x1 = np.asarray(x1, dtype=float)
    E = np.exp(2j * np.outer(sl.lambdas, x1))          # (L, nx)
    return np.real((sl.values * sl.lambda_weights) @ E) / math.pi   # (P, nx)


def tail_mass(c: SmoothBump, y0, rho: float, lam_max: float = 200.0, n: int = 20001) -> float:
    """int_{|lambda| >= rho} |c^(2 lambda, y0)|^2 d lambda by the trapezoid rule up to lam_max."""
    lam = np.linspace(rho, lam_max, n)
    v = np.abs(c.fourier(2 * lam, np.asarray(y0, dtype=float))) ** 2
    return float(2 * np.trapezoid(v, lam))


def tail_bound(h1_norm: float, rho: float) -> float:
    return h1_norm / (1 + rho * rho)


@dataclass
class ReconstructionResult:
    schedule: Schedule
    slice: FourierSlice
    c_rec: np.ndarray
    c_true: np.ndarray
    x1: np.ndarray
    l2_error: float
    band_error: float
    failures: list


def cell_seed(seed: int, *index) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed)] + [int(i) for i in index])


def reconstruct(M0: TransversalManifold, c: SmoothBump, k: float, schedule: Schedule, sigma: float,
                eps: float = 0.0, seed: int = 0, line: LineGrid | None = None, qcfg: QuasimodeConfig | None = None,
                y0_spacing: float = 0.3, margin: float = 0.4, n_lambda: int = 3, index=(), pool=None):
    """Slice estimates on a y0 lattice and lambda nodes in the window, then the windowed inverse."""
    line = line or LineGrid(1.0, 40, 20)
    qcfg = qcfg or QuasimodeConfig(delta=1.0)
    y0s, yw = y0_lattice(M0, y0_spacing, margin)
    lams, lw = lambda_nodes(schedule.lambda_window, n_lambda)
    tau = schedule.tau
    s_max = max(abs(make_spectral_parameter(k, tau, lam).s) for lam in lams)
    om = s_max + BAND_MARGIN
    basis = dirichlet_eigensystem(band_grid(M0, om), omega2_max=om * om)
    tau = guard_tau(tau, k, basis.eigenvalues)

    def task(p):
        y0 = y0s[p]
        vals = np.full(len(lams), np.nan + 0j)
        bud = np.full(len(lams), np.nan)
        errs = []
        try:
            pair = pick_geodesics(M0, y0)
            sp0 = make_spectral_parameter(k, tau, 0.0)
            etas = eta_pair(pair, sp0, basis, line, qcfg)
            for l, lam in enumerate(lams):
                sp = make_spectral_parameter(k, tau, lam)
                quad = build_quadruple(pair, sp, basis, line, qcfg, etas)
                P = interior_pairing(quad, c.on(line, basis.grid))
                P += noise_pairing(quad, eps, cell_seed(seed, *index, p, l))
                calib = calibrate_b0(quad, sigma)
                vals[l], bud[l] = fourier_slice(P, calib, sigma)
        except CGOError as exc:
            errs.append(f"y0={tuple(np.round(y0, 6))}: {type(exc).__name__}: {exc}")
        return vals, bud, errs

    out = list(pool.map(task, range(len(y0s)))) if pool is not None else [task(p) for p in range(len(y0s))]
    values = np.array([o[0] for o in out])
    budget = np.array([o[1] for o in out])
    failures = [e for o in out for e in o[2]]
    sl = FourierSlice(y0s, lams, values, budget, lw, schedule.lambda_window)
    x1 = line.x_inner
    c_rec = invert_fourier(sl, x1)
    c_true = c.amplitude * c.axial(x1)[None, :] * c.transversal(y0s)[:, None]
    # band-limited truth: the same inverse applied to the exact transform
    exact = FourierSlice(y0s, lams, c.fourier(2 * lams, y0s).T, budget, lw, schedule.lambda_window)
    c_band = invert_fourier(exact, x1)
    wx = line.trapezoid_weights()
    norm = lambda F: math.sqrt(float(np.sum(yw[:, None] * wx[None, :] * np.abs(F) ** 2)))
    ok = np.all(np.isfinite(values), axis=1)
    # relative to ||c||; absolute when c vanishes on the lattice
    ref = norm(c_true[ok]) if ok.any() else math.nan
    scale = ref if ref > 0 else 1.0
    l2 = norm((c_rec - c_true)[ok]) / scale if ok.any() else math.nan
    band = norm((c_rec - c_band)[ok]) / scale if ok.any() else math.nan
    return ReconstructionResult(schedule, sl, c_rec, c_true, x1, l2, band, failures)

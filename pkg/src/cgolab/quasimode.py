"""Gaussian-beam quasimodes on the transversal disk.

A beam along a geodesic is v = varsigma^((n-2)/8) exp(i s Theta) a with phase
Theta(t, y) = t + H(t) y^2 / 2 in Fermi coordinates, where the complex
curvature H solves the scalar Riccati equation H' + H^2 + K = 0, and the
leading amplitude solves a' + H a / 2 = 0 on the geodesic.  A cutoff in
|y| / delta confines the beam to a tube.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.spatial import cKDTree

from .errors import DomainError, GridTooCoarse, RiccatiBlowup
from .geometry import FermiChart, integrate_along

RE_S_FACTOR = 1.0


@dataclass(frozen=True)
class SpectralParameter:
    k: float
    tau: float
    lam: float

    @property
    def s(self) -> complex:
        # numpy's principal sqrt has Re >= 0
        return complex(np.sqrt(complex(self.k**2 + (self.tau + 1j * self.lam) ** 2)))

    @property
    def varsigma(self) -> float:
        return math.sqrt(self.k**2 + self.tau**2 - self.lam**2)

    @property
    def zeta(self) -> complex:
        return complex(self.tau, self.lam)


def make_spectral_parameter(k: float, tau: float, lam: float) -> SpectralParameter:
    """Validated (k, tau, lambda); asserts Re s >= varsigma and |Im s| <= sqrt(5) |lambda|."""
    if not (k >= 0 and tau >= 1):
        raise DomainError(f"need k >= 0 and tau >= 1, got k={k}, tau={tau}")
    if k**2 + tau**2 - lam**2 < 1:
        raise DomainError(f"k^2 + tau^2 - lambda^2 = {k**2 + tau**2 - lam**2:.6g} < 1")
    sp = SpectralParameter(float(k), float(tau), float(lam))
    s, vs = sp.s, sp.varsigma
    ulp = 4 * np.finfo(float).eps
    assert s.real >= RE_S_FACTOR * vs * (1 - ulp), (s, vs)
    assert abs(s.imag) <= math.sqrt(5) * abs(lam) * (1 + ulp), (s, lam)
    return sp


@dataclass(frozen=True)
class QuasimodeConfig:
    """Beam construction knobs.  ``order`` is the phase order (2 at baseline),
    ``decay_order`` is reported only, ``sobolev`` is the residual norm index."""

    order: int = 2
    decay_order: int = 2
    sobolev: int = 0
    delta: float = 0.2
    cutoff_smoothness: int = 2
    n: int = 3
    H0: complex = 1j
    c0: complex = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("tube radius delta must be positive")
        if self.order < 2:
            raise DomainError("phase order must be >= 2")
        if self.order > 2:
            raise NotImplementedError("only the second-order phase is implemented")


@dataclass(frozen=True, eq=False)
class PhaseJet:
    chart: FermiChart
    t: np.ndarray
    H: np.ndarray
    H_integral: np.ndarray
    curvature: np.ndarray

    @cached_property
    def _spline(self):
        dH = -self.H**2 - self.curvature
        return CubicHermiteSpline(self.t, np.stack([self.H, self.H_integral], -1),
                                  np.stack([dH, self.H], -1), axis=0)

    def H_at(self, t):
        return self._spline(t)[..., 0]

    def H_integral_at(self, t):
        return self._spline(t)[..., 1]

    def theta(self, t, y):
        return t + 0.5 * self.H_at(t) * y**2

    def riccati_residual(self) -> float:
        """Central-difference residual of H' + H^2 + K on uniformly spaced samples."""
        t, H = self.t, self.H
        dt = np.diff(t)
        ok = np.abs(dt[1:] - dt[:-1]) < 1e-12
        dH = (H[2:] - H[:-2]) / (t[2:] - t[:-2])
        res = np.abs(dH + H[1:-1] ** 2 + self.curvature[1:-1])
        return float(np.max(res[ok])) if ok.any() else 0.0


def solve_riccati(chart: FermiChart, H0: complex = 1j, cap: float = 1e6) -> PhaseJet:
    """Integrate H' = -H^2 - K along the chart's geodesic from H(0) = H0."""
    if not complex(H0).imag > 0:
        raise DomainError("Im H0 must be positive")
    geo = chart.geodesic
    M0 = chart.manifold
    K = M0.curvature(geo.x)

    def rhs(t, x, v, y):
        h = y[0]
        return np.array([-h * h - float(M0.curvature(x)), h])

    sol = integrate_along(geo, rhs, np.array([complex(H0), 0j]))
    H = sol[:, 0]
    if not np.all(np.isfinite(H)) or np.max(np.abs(H)) > cap:
        raise RiccatiBlowup("Riccati solution exceeded cap")
    if not np.all(H.imag > 0):
        raise RiccatiBlowup("Im H lost positivity")
    return PhaseJet(chart, geo.t, H, sol[:, 1], K)


@dataclass(frozen=True, eq=False)
class AmplitudeJet:
    phase: PhaseJet
    c0: complex

    def a0(self, t):
        return self.c0 * np.exp(-0.5 * self.phase.H_integral_at(t))

    @property
    def samples(self) -> np.ndarray:
        return self.c0 * np.exp(-0.5 * self.phase.H_integral)

    def transport_residual(self) -> float:
        t = self.phase.t
        a = self.samples
        dt = np.diff(t)
        ok = np.abs(dt[1:] - dt[:-1]) < 1e-12
        da = (a[2:] - a[:-2]) / (t[2:] - t[:-2])
        res = np.abs(da + 0.5 * self.phase.H[1:-1] * a[1:-1])
        return float(np.max(res[ok])) if ok.any() else 0.0


def transport_amplitude(phase: PhaseJet, c0: complex = 1.0) -> AmplitudeJet:
    if c0 == 0:
        raise DomainError("amplitude normalization c0 must be nonzero")
    return AmplitudeJet(phase, complex(c0))


def smoothstep_cutoff(r):
    """C^2 quintic cutoff: 1 for r <= 1/4, 0 for r >= 1/2."""
    u = np.clip((np.abs(r) - 0.25) / 0.25, 0.0, 1.0)
    return 1.0 - u**3 * (10 - 15 * u + 6 * u**2)


@dataclass(frozen=True, eq=False)
class Beam:
    """Continuous Gaussian beam; evaluates at arbitrary points of the plane."""

    chart: FermiChart
    phase: PhaseJet
    amplitude: AmplitudeJet
    sp: SpectralParameter
    cfg: QuasimodeConfig
    conjugate: bool = False

    @property
    def prefactor(self) -> float:
        return self.sp.varsigma ** ((self.cfg.n - 2) / 8)

    @cached_property
    def _tree(self):
        return cKDTree(self.chart.geodesic.x)

    def _near(self, pts):
        geo = self.chart.geodesic
        e_min = math.exp(float(np.min(self.chart.manifold.phi(geo.x))))
        reach = 0.5 * self.cfg.delta / e_min * 1.2 + np.max(np.diff(geo.t))
        d, _ = self._tree.query(pts, distance_upper_bound=reach)
        return np.isfinite(d)

    def parts(self, pts):
        """(Theta, A) with v = exp(i s Theta) A, and a mask of points in the tube.

        For the conjugate beam the returned phase is conj(Theta) and the
        multiplier uses conj(s)."""
        pts = np.asarray(pts, dtype=float)
        shape = pts.shape[:-1]
        p = pts.reshape(-1, 2)
        theta = np.zeros(len(p), dtype=complex)
        A = np.zeros(len(p), dtype=complex)
        near = self._near(p)
        if near.any():
            t, y, ok = self.chart.inverse(p[near])
            chi = smoothstep_cutoff(y / self.cfg.delta)
            chi = np.where(ok, chi, 0.0)
            th = np.where(ok, self.phase.theta(t, y), 0.0)
            a = np.where(ok, self.amplitude.a0(t), 0.0)
            theta[near] = th
            A[near] = self.prefactor * a * chi
        if self.conjugate:
            theta, A = np.conj(theta), np.conj(A)
        return theta.reshape(shape), A.reshape(shape)

    @property
    def s_eff(self) -> complex:
        return np.conj(self.sp.s) if self.conjugate else self.sp.s

    def __call__(self, pts):
        # exp(i s Theta) with conj: conj(exp(i s Theta)) = exp(-i conj(s) conj(Theta))
        theta, A = self.parts(pts)
        sgn = -1.0 if self.conjugate else 1.0
        return np.exp(sgn * 1j * self.s_eff * theta) * A

    def conj(self) -> "Beam":
        return Beam(self.chart, self.phase, self.amplitude, self.sp, self.cfg, not self.conjugate)

    def residual(self, pts, step: float = 1e-3):
        """(-Delta_g - s^2) v at points, from fourth-order stencils of the smooth
        factors Theta and A (the oscillatory factor is differentiated exactly)."""
        pts = np.asarray(pts, dtype=float)
        shape = pts.shape[:-1]
        p = pts.reshape(-1, 2)
        out = np.zeros(len(p), dtype=complex)
        near = self._near(p)
        if not near.any():
            return out.reshape(shape)
        q = p[near]
        offs = [(0, 0)] + [(sx * j, sy * j) for j in (1, 2) for sx, sy in ((1, 0), (-1, 0), (0, 1), (0, -1))]
        stack = np.concatenate([q + step * np.array(o) for o in offs])
        TH, AA = self.parts(stack)
        TH = TH.reshape(len(offs), -1)
        AA = AA.reshape(len(offs), -1)

        def derivs(F):
            c = F[0]
            f1x, fm1x, f1y, fm1y = F[1], F[2], F[3], F[4]
            f2x, fm2x, f2y, fm2y = F[5], F[6], F[7], F[8]
            gx = (-f2x + 8 * f1x - 8 * fm1x + fm2x) / (12 * step)
            gy = (-f2y + 8 * f1y - 8 * fm1y + fm2y) / (12 * step)
            lx = (-f2x + 16 * f1x - 30 * c + 16 * fm1x - fm2x) / (12 * step**2)
            ly = (-f2y + 16 * f1y - 30 * c + 16 * fm1y - fm2y) / (12 * step**2)
            return c, gx, gy, lx + ly

        th, thx, thy, lth = derivs(TH)
        a, ax, ay, la = derivs(AA)
        sgn = -1.0 if self.conjugate else 1.0
        s = sgn * self.s_eff  # v = exp(i s Theta) A with this s
        w = np.exp(-2 * self.chart.manifold.phi(q))
        grad2 = thx**2 + thy**2
        lap_v = w * (la + 2j * s * (thx * ax + thy * ay) + 1j * s * lth * a - s**2 * grad2 * a)
        res = -lap_v - self.sp.s**2 * a if not self.conjugate else -lap_v - np.conj(self.sp.s) ** 2 * a
        out[near] = np.exp(1j * s * th) * res
        return out.reshape(shape)


@dataclass(frozen=True, eq=False)
class Quasimode:
    beam: Beam
    grid: object
    field: np.ndarray

    @property
    def sp(self) -> SpectralParameter:
        return self.beam.sp

    def l4_norm(self) -> float:
        return float(self.grid.integrate(np.abs(self.field) ** 4) ** 0.25)

    def l2_norm(self) -> float:
        return float(self.grid.l2(self.field))


def make_beam(chart: FermiChart, sp: SpectralParameter, cfg: QuasimodeConfig) -> Beam:
    phase = solve_riccati(chart, cfg.H0)
    amp = transport_amplitude(phase, cfg.c0)
    return Beam(chart, phase, amp, sp, cfg)


def assemble_quasimode(chart: FermiChart, phase: PhaseJet, amplitude: AmplitudeJet, sp: SpectralParameter,
                       cfg: QuasimodeConfig, grid, check_resolution: bool = True) -> Quasimode:
    """Sample the beam on ``grid``.  Raises GridTooCoarse unless h <= 0.2 varsigma^(-1/2)."""
    if check_resolution and grid.h > 0.2 / math.sqrt(sp.varsigma):
        raise GridTooCoarse(f"h={grid.h:.4g} exceeds 0.2*varsigma^-1/2={0.2 / math.sqrt(sp.varsigma):.4g}")
    beam = Beam(chart, phase, amplitude, sp, cfg)
    f = beam(grid.points)
    f[..., -1, :] = 0.0
    return Quasimode(beam, grid, f)


def quasimode_residual(qm: Quasimode, sp: SpectralParameter | None = None, M0=None, m: int = 0):
    """Residual (-Delta_g - s^2) v on the grid, its L2 norm and the relative
    residual ||f|| / (|s|^2 ||v||).  Only m = 0 is supported."""
    if m != 0:
        raise NotImplementedError("only the L2 residual norm is implemented")
    beam = qm.beam if sp is None or sp == qm.sp else Beam(qm.beam.chart, qm.beam.phase, qm.beam.amplitude,
                                                          sp, qm.beam.cfg)
    f = beam.residual(qm.grid.points)
    f[..., -1, :] = 0.0
    norm = float(qm.grid.l2(f))
    vn = qm.l2_norm()
    rel = norm / (abs(beam.sp.s) ** 2 * vn) if vn > 0 else 0.0
    return f, norm, rel

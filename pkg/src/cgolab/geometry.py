"""Transversal manifold (unit disk with a radial conformal metric), geodesics,
parallel frames and Fermi charts.

The metric is g0 = exp(2 phi(|x|)) * identity.  For such metrics the
Christoffel symbols are closed form,

    Gamma^k_ij = d_i phi delta_jk + d_j phi delta_ik - d_k phi delta_ij,

so the geodesic equation reads  x'' = |x'|^2 grad(phi) - 2 (grad(phi).x') x'.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq, minimize_scalar
from scipy.spatial import cKDTree

from .errors import DomainError, NoExit, TangentialExit, TubeTooWide

FAMILIES = ("flat", "constant", "gaussian_bump")


@dataclass(frozen=True)
class Profile:
    """Radial conformal exponent phi.

    ``gaussian_bump``: phi(r) = amplitude * exp(-r^2 / width^2).
    ``constant``: phi = amplitude.  ``flat``: phi = 0.
    """

    family: str = "flat"
    amplitude: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown metric family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "gaussian_bump" and not self.width > 0:
            raise DomainError("gaussian_bump width must be positive")

    @property
    def is_flat(self) -> bool:
        return self.family == "flat" or self.amplitude == 0.0

    def phi(self, r2):
        """phi as a function of r^2."""
        r2 = np.asarray(r2, dtype=float)
        if self.family == "gaussian_bump":
            return self.amplitude * np.exp(-r2 / self.width**2)
        if self.family == "constant":
            return np.full_like(r2, self.amplitude)
        return np.zeros_like(r2)

    def grad_coef(self, r2):
        """q(r^2) with grad(phi)(x) = q * x."""
        if self.family == "gaussian_bump":
            return -2.0 / self.width**2 * self.phi(r2)
        return np.zeros_like(np.asarray(r2, dtype=float))

    def dphi_dr(self, r):
        r = np.asarray(r, dtype=float)
        return self.grad_coef(r * r) * r

    def laplacian(self, r2):
        """Euclidean Laplacian of phi."""
        if self.family == "gaussian_bump":
            r2 = np.asarray(r2, dtype=float)
            return 2.0 * self.grad_coef(r2) * (1.0 - r2 / self.width**2)
        return np.zeros_like(np.asarray(r2, dtype=float))

    def _q_scalar(self, r2: float) -> float:
        if self.family == "gaussian_bump":
            return -2.0 / self.width**2 * self.amplitude * math.exp(-r2 / self.width**2)
        return 0.0


@dataclass(frozen=True)
class TransversalManifold:
    """The unit disk with metric exp(2 phi) * identity."""

    profile: Profile = Profile()
    radius: float = 1.0

    @property
    def is_flat(self) -> bool:
        return self.profile.is_flat and self.profile.family != "constant"

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return self.profile.phi(np.sum(x * x, axis=-1))

    def grad_phi(self, x):
        x = np.asarray(x, dtype=float)
        return self.profile.grad_coef(np.sum(x * x, axis=-1))[..., None] * x

    def conformal_factor(self, x):
        return np.exp(2.0 * self.phi(x))

    def metric(self, x):
        c = self.conformal_factor(x)
        return c[..., None, None] * np.eye(2)

    def curvature(self, x):
        """Gaussian curvature K = -exp(-2 phi) * Laplacian(phi)."""
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return -np.exp(-2.0 * self.profile.phi(r2)) * self.profile.laplacian(r2)

    def inner(self, x, u, v):
        return self.conformal_factor(x) * np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def norm(self, x, v):
        return np.sqrt(np.real(self.inner(x, v, np.conj(v))))

    def geodesic_acc(self, x, v):
        g = self.grad_phi(x)
        gv = np.sum(g * v, axis=-1)[..., None]
        vv = np.sum(v * v, axis=-1)[..., None]
        return vv * g - 2.0 * gv * v

    def transport_rhs(self, x, v, e):
        """Right-hand side of the parallel transport equation for e along velocity v."""
        g = self.grad_phi(x)
        gv = np.sum(g * v, axis=-1)[..., None]
        ge = np.sum(g * e, axis=-1)[..., None]
        ve = np.sum(v * e, axis=-1)[..., None]
        return -(gv * e + ge * v - ve * g)


def _rk4_scalar(q, x, y, vx, vy, h):
    def acc(x, y, vx, vy):
        s = q(x * x + y * y)
        gv = s * (x * vx + y * vy)
        vv = vx * vx + vy * vy
        return vv * s * x - 2.0 * gv * vx, vv * s * y - 2.0 * gv * vy

    a1x, a1y = acc(x, y, vx, vy)
    x2, y2 = x + 0.5 * h * vx, y + 0.5 * h * vy
    v2x, v2y = vx + 0.5 * h * a1x, vy + 0.5 * h * a1y
    a2x, a2y = acc(x2, y2, v2x, v2y)
    x3, y3 = x + 0.5 * h * v2x, y + 0.5 * h * v2y
    v3x, v3y = vx + 0.5 * h * a2x, vy + 0.5 * h * a2y
    a3x, a3y = acc(x3, y3, v3x, v3y)
    x4, y4 = x + h * v3x, y + h * v3y
    v4x, v4y = vx + h * a3x, vy + h * a3y
    a4x, a4y = acc(x4, y4, v4x, v4y)
    return (
        x + h / 6.0 * (vx + 2 * v2x + 2 * v3x + v4x),
        y + h / 6.0 * (vy + 2 * v2y + 2 * v3y + v4y),
        vx + h / 6.0 * (a1x + 2 * a2x + 2 * a3x + a4x),
        vy + h / 6.0 * (a1y + 2 * a2y + 2 * a3y + a4y),
    )


@dataclass(frozen=True, eq=False)
class Geodesic:
    """Unit-speed geodesic sampled in arclength.

    ``t`` runs from ``t[0] <= 0`` to ``t[-1] >= length``; the chord inside the
    disk is ``0 <= t <= length``.  Samples with t outside that range belong to
    the extension past the boundary (the metric is defined on all of R^2).
    """

    manifold: TransversalManifold
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    length: float
    entry_cos: float
    exit_cos: float
    min_exit_cos: float = 0.1

    @property
    def endpoint_transversality(self) -> tuple[bool, bool]:
        return (self.entry_cos >= self.min_exit_cos, self.exit_cos >= self.min_exit_cos)

    @property
    def entry_index(self) -> int:
        return int(np.argmin(np.abs(self.t)))

    @property
    def exit_index(self) -> int:
        return int(np.argmin(np.abs(self.t - self.length)))

    @cached_property
    def _splines(self):
        acc = self.manifold.geodesic_acc(self.x, self.v)
        return (CubicHermiteSpline(self.t, self.x, self.v, axis=0),
                CubicHermiteSpline(self.t, self.v, acc, axis=0))

    def position(self, t):
        return self._splines[0](t)

    def velocity(self, t):
        return self._splines[1](t)

    def inside(self) -> slice:
        return slice(self.entry_index, self.exit_index + 1)


def _trace(M0: TransversalManifold, x, y, vx, vy, h, max_length, start_on_boundary=False):
    """Integrate until the disk boundary is crossed; returns samples and exit data."""
    q = M0.profile._q_scalar
    R = M0.radius
    xs, ys, vxs, vys, ts = [x], [y], [vx], [vy], [0.0]
    s = 0.0
    first = True
    while True:
        xn, yn, vxn, vyn = _rk4_scalar(q, x, y, vx, vy, h)
        if math.hypot(xn, yn) >= R and not (first and start_on_boundary and math.hypot(x, y) >= R - 1e-14
                                             and xn * x + yn * y < x * x + y * y):
            lo = 0.0 if not (first and start_on_boundary) else 1e-9 * h

            def f(th):
                a, b, _, _ = _rk4_scalar(q, x, y, vx, vy, th)
                return math.hypot(a, b) - R

            if f(lo) >= 0.0:
                raise TangentialExit("geodesic exits immediately")
            th = brentq(f, lo, h, xtol=1e-16, rtol=1e-15, maxiter=200)
            xn, yn, vxn, vyn = _rk4_scalar(q, x, y, vx, vy, th)
            xs.append(xn); ys.append(yn); vxs.append(vxn); vys.append(vyn); ts.append(s + th)
            break
        x, y, vx, vy = xn, yn, vxn, vyn
        s += h
        xs.append(x); ys.append(y); vxs.append(vx); vys.append(vy); ts.append(s)
        first = False
        if s > max_length:
            raise NoExit(f"geodesic longer than {max_length}; metric may not be simple")
    pts = np.column_stack([xs, ys])
    vel = np.column_stack([vxs, vys])
    return np.asarray(ts), pts, vel


def _extend(M0, x, v, length, h):
    q = M0.profile._q_scalar
    n = max(1, int(math.ceil(length / h)))
    step = length / n
    a, b, va, vb = x[0], x[1], v[0], v[1]
    xs, vs = [], []
    for _ in range(n):
        a, b, va, vb = _rk4_scalar(q, a, b, va, vb, step)
        xs.append((a, b)); vs.append((va, vb))
    return step * np.arange(1, n + 1), np.asarray(xs), np.asarray(vs)


def _exit_cos(M0, x, v):
    n = x / np.linalg.norm(x)
    return float(abs(np.dot(v, n)) / np.linalg.norm(v))


def shoot_geodesic(M0: TransversalManifold, x0, direction, h: float = 1e-3, extend: float = 0.0,
                   min_exit_cos: float = 0.1, max_length: float = 50.0) -> Geodesic:
    """Shoot the geodesic through interior point ``x0`` with the given direction.

    Integrates forward and backward with fixed-step RK4 until the boundary is
    crossed (the crossing is located by root finding on a partial step), then
    optionally continues ``extend`` past both ends.  Raises ``TangentialExit``
    if either end meets the boundary with |cos| below ``min_exit_cos``.
    """
    x0 = np.asarray(x0, dtype=float)
    d = np.asarray(direction, dtype=float)
    if not np.linalg.norm(x0) < M0.radius:
        raise DomainError("x0 must be strictly inside the disk")
    if not np.linalg.norm(d) > 0:
        raise DomainError("direction must be nonzero")
    v0 = d / (np.linalg.norm(d) * math.exp(float(M0.phi(x0))))
    tf, xf, vf = _trace(M0, x0[0], x0[1], v0[0], v0[1], h, max_length)
    tb, xb, vb = _trace(M0, x0[0], x0[1], -v0[0], -v0[1], h, max_length)
    # backward branch reversed: positions in forward order, velocities flipped
    t = np.concatenate([-tb[:0:-1], tf])
    x = np.concatenate([xb[:0:-1], xf])
    v = np.concatenate([-vb[:0:-1], vf])
    t = t - t[0]
    length = float(t[-1])
    entry_cos = _exit_cos(M0, x[0], v[0])
    exit_cos = _exit_cos(M0, x[-1], v[-1])
    if entry_cos < min_exit_cos or exit_cos < min_exit_cos:
        raise TangentialExit(f"boundary angle cosines {entry_cos:.3g}, {exit_cos:.3g} below {min_exit_cos}")
    if extend > 0:
        te, xe, ve = _extend(M0, x[-1], v[-1], extend, h)
        ts, xs, vs = _extend(M0, x[0], -v[0], extend, h)
        t = np.concatenate([-ts[::-1], t, length + te])
        x = np.concatenate([xs[::-1], x, xe])
        v = np.concatenate([-vs[::-1], v, ve])
    return Geodesic(M0, t, x, v, length, entry_cos, exit_cos, min_exit_cos)


def integrate_along(geo: Geodesic, rhs, y0, t_start: float = 0.0):
    """RK4 for y' = rhs(t, x(t), v(t), y) on the geodesic samples.

    Starts at the sample nearest ``t_start`` and runs forward and backward, so
    the step sizes are exactly the sample spacings.  Midpoint geometry comes
    from the Hermite interpolant, which is O(h^4) accurate.
    """
    t = geo.t
    n = len(t)
    i0 = int(np.argmin(np.abs(t - t_start)))
    tm = 0.5 * (t[1:] + t[:-1])
    xm, vm = geo.position(tm), geo.velocity(tm)
    y0 = np.asarray(y0)
    out = np.empty((n,) + y0.shape, dtype=np.result_type(y0, float))
    out[i0] = y0

    def step(i, j, y):
        h = t[j] - t[i]
        m = min(i, j)
        k1 = rhs(t[i], geo.x[i], geo.v[i], y)
        k2 = rhs(tm[m], xm[m], vm[m], y + 0.5 * h * k1)
        k3 = rhs(tm[m], xm[m], vm[m], y + 0.5 * h * k2)
        k4 = rhs(t[j], geo.x[j], geo.v[j], y + h * k3)
        return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    y = y0
    for i in range(i0, n - 1):
        y = step(i, i + 1, y)
        out[i + 1] = y
    y = y0
    for i in range(i0, 0, -1):
        y = step(i, i - 1, y)
        out[i - 1] = y
    return out


def rot90(v):
    v = np.asarray(v)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def parallel_frame(geo: Geodesic) -> np.ndarray:
    """Unit normal E(t) parallel-transported from the entry point.

    In two dimensions E is determined up to sign; the transport ODE is
    integrated here and the closed-form rotation of the velocity is left to
    the tests as an oracle.
    """
    M0 = geo.manifold
    e0 = rot90(geo.v[geo.entry_index])
    return integrate_along(geo, lambda t, x, v, e: M0.transport_rhs(x, v, e), e0)


def geodesic_residual(geo: Geodesic) -> float:
    """Max |v' - acc(x, v)| over uniformly spaced samples (central differences)."""
    t, v = geo.t, geo.v
    hl, hr = np.diff(t)[:-1], np.diff(t)[1:]
    ok = np.abs(hl - hr) < 1e-12 * np.maximum(hl, 1e-300)
    dv = (v[2:] - v[:-2]) / (t[2:] - t[:-2])[:, None]
    acc = geo.manifold.geodesic_acc(geo.x[1:-1], v[1:-1])
    return float(np.max(np.linalg.norm(dv - acc, axis=-1)[ok])) if ok.any() else 0.0


def speed_error(geo: Geodesic) -> float:
    return float(np.max(np.abs(geo.manifold.norm(geo.x, geo.v) - 1.0)))


def jacobi_field(geo: Geodesic) -> np.ndarray:
    """Normal Jacobi field J'' + K J = 0, J(0) = 0, J'(0) = 1, on the inside chord."""
    M0 = geo.manifold

    def rhs(t, x, v, y):
        return np.array([y[1], -float(M0.curvature(x)) * y[0]])

    return integrate_along(geo, rhs, np.array([0.0, 1.0]))[:, 0]


def no_conjugate_points(geo: Geodesic) -> bool:
    j = jacobi_field(geo)
    inside = (geo.t > 1e-9) & (geo.t <= geo.length + 1e-12)
    return bool(np.all(j[inside] > 0))


def _self_intersects(geo: Geodesic, delta: float) -> bool:
    stride = max(1, int(delta / 8 / max(np.median(np.diff(geo.t)), 1e-12)))
    idx = np.arange(0, len(geo.t), stride)
    tree = cKDTree(geo.x[idx])
    for i, j in tree.query_pairs(delta / 2):
        if abs(geo.t[idx[i]] - geo.t[idx[j]]) > 4 * delta:
            return True
    return False


@dataclass(frozen=True, eq=False)
class FermiChart:
    """Fermi coordinates (t, y) around a geodesic: F(t, y) = exp_{gamma(t)}(y E(t))."""

    geodesic: Geodesic
    frame: np.ndarray
    tube_radius: float
    substeps: int = 16

    @property
    def manifold(self) -> TransversalManifold:
        return self.geodesic.manifold

    @cached_property
    def _frame_spline(self):
        geo = self.geodesic
        de = self.manifold.transport_rhs(geo.x, geo.v, self.frame)
        return CubicHermiteSpline(geo.t, self.frame, de, axis=0)

    @cached_property
    def _tree(self):
        return cKDTree(self.geodesic.x)

    def normal(self, t):
        return self._frame_spline(t)

    def forward(self, t, y):
        t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
        p = self.geodesic.position(t)
        w = y[..., None] * self.normal(t)
        if self.manifold.is_flat:
            return p + w
        M0 = self.manifold
        h = 1.0 / self.substeps
        x, v = p, w
        for _ in range(self.substeps):
            a1 = M0.geodesic_acc(x, v)
            x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
            a2 = M0.geodesic_acc(x2, v2)
            x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
            a3 = M0.geodesic_acc(x3, v3)
            x4, v4 = x + h * v3, v + h * a3
            a4 = M0.geodesic_acc(x4, v4)
            x = x + h / 6 * (v + 2 * v2 + 2 * v3 + v4)
            v = v + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        return x

    def inverse(self, pts, tol: float = 1e-13, maxiter: int = 40):
        """Newton inversion of F.  Returns (t, y, ok); ok is False where the
        iteration failed or the point falls outside the sampled t range."""
        pts = np.asarray(pts, dtype=float)
        shape = pts.shape[:-1]
        p = pts.reshape(-1, 2)
        geo = self.geodesic
        _, idx = self._tree.query(p)
        t = geo.t[idx].copy()
        c = self.manifold.conformal_factor(geo.x[idx])
        d = p - geo.x[idx]
        t = t + c * np.sum(d * geo.v[idx], axis=-1)
        t = np.clip(t, geo.t[0], geo.t[-1])
        y = c * np.sum(d * self.frame[idx], axis=-1)
        if self.manifold.is_flat:
            # straight chord: the first-order projection is exact up to rounding
            e = p - self.forward(t, y)
            return (t + np.sum(e * geo.velocity(t), -1)).reshape(shape), \
                (y + np.sum(e * self.normal(t), -1)).reshape(shape), \
                ((t >= geo.t[0]) & (t <= geo.t[-1])).reshape(shape)
        eps = 1e-6
        ok = np.zeros(len(t), dtype=bool)
        active = np.ones(len(t), dtype=bool)
        for _ in range(maxiter):
            if not active.any():
                break
            ta, ya = t[active], y[active]
            r = self.forward(ta, ya) - p[active]
            jt = (self.forward(ta + eps, ya) - self.forward(ta - eps, ya)) / (2 * eps)
            jy = (self.forward(ta, ya + eps) - self.forward(ta, ya - eps)) / (2 * eps)
            det = jt[:, 0] * jy[:, 1] - jt[:, 1] * jy[:, 0]
            dt = -(jy[:, 1] * r[:, 0] - jy[:, 0] * r[:, 1]) / det
            dy = -(-jt[:, 1] * r[:, 0] + jt[:, 0] * r[:, 1]) / det
            t[active] = np.clip(ta + dt, geo.t[0], geo.t[-1])
            y[active] = ya + dy
            step = np.hypot(dt, dy)
            done = step < tol
            ids = np.flatnonzero(active)
            ok[ids[done]] = True
            active[ids[done]] = False
        inside = (t > geo.t[0]) & (t < geo.t[-1])
        return t.reshape(shape), y.reshape(shape), (ok & inside).reshape(shape)

    def metric_in_chart(self, t, y, h: float = 1e-5):
        """Pulled-back metric G_ab = <dF/da, dF/db>_g0, coordinates ordered (t, y)."""
        t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
        jt = (self.forward(t + h, y) - self.forward(t - h, y)) / (2 * h)
        jy = (self.forward(t, y + h) - self.forward(t, y - h)) / (2 * h)
        c = self.manifold.conformal_factor(self.forward(t, y))
        J = np.stack([jt, jy], axis=-1)
        return c[..., None, None] * np.einsum("...ka,...kb->...ab", J, J)


def build_fermi_chart(geo: Geodesic, delta: float, tol: float = 1e-8) -> FermiChart:
    """Build the Fermi chart on the tube |y| <= delta around ``geo``.

    Raises ``TubeTooWide`` if the geodesic comes back within delta/2 of itself
    or if the inverse map fails a round trip on a 20x20 tube grid.
    """
    if not delta > 0:
        raise DomainError("tube radius must be positive")
    if _self_intersects(geo, delta):
        raise TubeTooWide("geodesic self-approaches within the tube")
    chart = FermiChart(geo, parallel_frame(geo), delta)
    tt, yy = np.meshgrid(np.linspace(0.0, geo.length, 20), np.linspace(-delta, delta, 20))
    t2, y2, ok = chart.inverse(chart.forward(tt, yy))
    err = np.where(ok, np.hypot(t2 - tt, y2 - yy), np.inf)
    if not np.all(err < tol):
        raise TubeTooWide(f"inverse chart round-trip error {np.max(err):.2e} exceeds {tol:.1e}")
    return chart


def chord_length(M0: TransversalManifold, angle: float, alpha: float, h: float = 1e-3) -> float:
    """Length of the geodesic leaving the boundary point at polar ``angle``
    with direction rotated by ``alpha`` from the inward normal."""
    b = np.array([math.cos(angle), math.sin(angle)]) * M0.radius
    d = -np.array([math.cos(angle + alpha), math.sin(angle + alpha)])
    v = d * math.exp(-float(M0.phi(b)))
    ts, _, _ = _trace(M0, b[0], b[1], v[0], v[1], h, 50.0, start_on_boundary=True)
    return float(ts[-1])


def diameter(M0: TransversalManifold, n_points: int | None = None, n_dirs: int = 64,
             h: float = 1e-3, refine: bool = True) -> float:
    """Supremum of geodesic chord lengths over boundary-point/direction shots.

    For the radial metrics supported here every boundary point is equivalent,
    so ``n_points`` defaults to 1.  The best direction on the grid is polished
    with a bounded scalar search.
    """
    n_points = 1 if n_points is None else n_points
    lim = 0.5 * math.pi - 1e-3
    alphas = np.linspace(-lim, lim, n_dirs + 1)
    best, best_arg = -1.0, (0.0, 0.0)
    for angle in 2 * math.pi * np.arange(n_points) / n_points:
        for a in alphas:
            L = chord_length(M0, angle, a, h)
            if L > best:
                best, best_arg = L, (angle, a)
    if refine:
        angle, a0 = best_arg
        da = alphas[1] - alphas[0]
        res = minimize_scalar(lambda a: -chord_length(M0, angle, a, h),
                              bounds=(max(-lim, a0 - da), min(lim, a0 + da)), method="bounded",
                              options={"xatol": 1e-6})
        best = max(best, -float(res.fun))
    return best


def check_simple(M0: TransversalManifold, n_dirs: int = 12, h: float = 1e-3) -> None:
    """Shoot a fan of geodesics through a few interior points and require a
    finite exit and a positive Jacobi field on each.  Raises NoExit otherwise."""
    for x0 in ((0.0, 0.0), (0.5, 0.0), (0.0, -0.7)):
        for a in np.pi * np.arange(n_dirs) / n_dirs:
            geo = shoot_geodesic(M0, x0, (math.cos(a), math.sin(a)), h=h, min_exit_cos=0.0)
            if not no_conjugate_points(geo):
                raise NoExit(f"conjugate point along geodesic from {x0} at angle {a:.3f}")

"""Named invariant checks across all modules, run by ``cgolab verify``.

Each check returns (passed, measured) where ``measured`` is a flat dict of
numbers; the suite collects them into a machine-readable report.
"""
from __future__ import annotations

import math
import time

import numpy as np
from scipy.special import jn_zeros

from . import dtn
from .config import RunConfig, parse, serialize
from .cylinder import LineGrid, assemble_cgo, line_solve, mode_profiles, resolvent_solve
from .geometry import (Profile, TransversalManifold, build_fermi_chart, chord_length, diameter, geodesic_residual,
                       no_conjugate_points, parallel_frame, shoot_geodesic, speed_error)
from .quasimode import (QuasimodeConfig, assemble_quasimode, make_beam, make_spectral_parameter, quasimode_residual,
                        solve_riccati, transport_amplitude)
from .reconstruct import laplace_average, parameter_schedule, pick_geodesics
from .spectral import band_grid, build_grid, dirichlet_eigensystem

CHECKS = []


def check(name):
    def wrap(fn):
        CHECKS.append((name, fn))
        return fn
    return wrap


def _manifold(cfg):
    return TransversalManifold(Profile(cfg.family, cfg.amplitude, cfg.width))


def _bump():
    return TransversalManifold(Profile("gaussian_bump", 0.1, 0.5))


@check("quasimode.spectral_parameter_bounds")
def _sp_bounds(cfg):
    rng = np.random.default_rng(cfg.seed)
    n, bad = 10_000, 0
    for _ in range(n):
        tau = rng.uniform(1, 50)
        k = rng.uniform(0, 50)
        lam = rng.uniform(-1, 1) * math.sqrt(max(k * k + tau * tau - 1, 0))
        sp = make_spectral_parameter(k, tau, lam)
        ulp = 4 * np.finfo(float).eps
        bad += not (sp.s.real >= sp.varsigma * (1 - ulp) and abs(sp.s.imag) <= math.sqrt(5) * abs(lam) * (1 + ulp))
    return bad == 0, {"samples": n, "violations": bad}


@check("geometry.flat_chord_length")
def _chord(cfg):
    M0 = TransversalManifold()
    err = max(abs(chord_length(M0, 0.3, a) - 2 * math.cos(a)) for a in (0.0, 0.4, 1.0))
    return err < 1e-9, {"max_error": err}


@check("geometry.geodesic_equation_residual")
def _georesid(cfg):
    geo = shoot_geodesic(_bump(), (0.1, -0.2), (1.0, 0.3))
    r = geodesic_residual(geo)
    return r < 1e-5, {"residual": r}


@check("geometry.unit_speed")
def _speed(cfg):
    e = speed_error(shoot_geodesic(_bump(), (0.1, -0.2), (1.0, 0.3)))
    return e < 1e-10, {"speed_error": e}


@check("geometry.parallel_frame_normal")
def _frame(cfg):
    geo = shoot_geodesic(_bump(), (0.0, 0.2), (1.0, 0.0))
    E = parallel_frame(geo)
    M0 = geo.manifold
    dot = np.max(np.abs(M0.inner(geo.x, E, geo.v)))
    unit = np.max(np.abs(M0.norm(geo.x, E) - 1))
    return dot < 1e-6 and unit < 1e-6, {"max_dot": float(dot), "max_unit_defect": float(unit)}


@check("geometry.fermi_metric_identity_on_geodesic")
def _fermi(cfg):
    geo = shoot_geodesic(_bump(), (0.0, 0.1), (1.0, 0.2), extend=0.3)
    chart = build_fermi_chart(geo, 0.3)
    ts = np.linspace(0.2, geo.length - 0.2, 5)
    err = max(np.max(np.abs(chart.metric_in_chart(t, 0.0) - np.eye(2))) for t in ts)
    return err < 1e-6, {"max_metric_defect": float(err)}


@check("geometry.flat_diameter")
def _diam(cfg):
    d = diameter(TransversalManifold())
    return abs(d - 2.0) < 1e-9, {"diameter": d}


@check("geometry.no_conjugate_points")
def _conj(cfg):
    geo = shoot_geodesic(_bump(), (0.0, 0.0), (1.0, 0.0))
    return bool(no_conjugate_points(geo)), {}


@check("spectral.fv_first_eigenvalue")
def _fv(cfg):
    basis = dirichlet_eigensystem(build_grid(TransversalManifold(), cfg.h), J=1)
    exact = jn_zeros(0, 1)[0] ** 2
    rel = abs(basis.eigenvalues[0] - exact) / exact
    return rel < 5 * cfg.h**2, {"omega1_sq": float(basis.eigenvalues[0]), "relative_error": rel}


@check("spectral.galerkin_matches_bessel_zeros")
def _gauss(cfg):
    basis = dirichlet_eigensystem(band_grid(TransversalManifold(), 30.0), omega2_max=900.0)
    exact = np.sort(np.concatenate([np.repeat(jn_zeros(m, 12) ** 2, 1 if m == 0 else 2) for m in range(40)]))
    exact = exact[exact <= 900.0]
    ev = np.sort(basis.eigenvalues)
    n = min(len(ev), len(exact))
    err = float(np.max(np.abs(ev[:n] - exact[:n]) / exact[:n]))
    return len(ev) == len(exact) and err < 1e-8, {"modes": len(ev), "max_relative_error": err}


@check("spectral.orthonormality")
def _ortho(cfg):
    basis = dirichlet_eigensystem(band_grid(_bump(), 20.0), omega2_max=400.0)
    G = basis.project(np.stack([basis.mode(j) for j in range(basis.J)]))
    err = float(np.max(np.abs(G - np.eye(basis.J))))
    return err < 1e-9, {"modes": basis.J, "gram_defect": err}


@check("spectral.constant_conformal_scaling")
def _scale(cfg):
    a = dirichlet_eigensystem(band_grid(TransversalManifold(), 15.0), omega2_max=225.0)
    b = dirichlet_eigensystem(band_grid(TransversalManifold(Profile("constant", 0.3)), 15.0), omega2_max=225.0)
    n = min(a.J, b.J)
    err = float(np.max(np.abs(np.sort(b.eigenvalues)[:n] / np.sort(a.eigenvalues)[:n] - math.exp(-0.6))))
    return err < 1e-10, {"max_ratio_defect": err}


def _flat_beam(varsigma, delta=1.0):
    M0 = TransversalManifold()
    geo = shoot_geodesic(M0, (0.0, 0.0), (1.0, 0.0), extend=1.0)
    chart = build_fermi_chart(geo, delta)
    sp = make_spectral_parameter(math.sqrt(varsigma**2 - 1), 1.0, 0.0)
    return M0, chart, sp


@check("quasimode.riccati_residual")
def _ric(cfg):
    geo = shoot_geodesic(_bump(), (0.0, 0.0), (1.0, 0.0), extend=0.5)
    phase = solve_riccati(build_fermi_chart(geo, 0.5))
    r = phase.riccati_residual()
    return r < 1e-4 and bool(np.all(phase.H.imag > 0)), {"residual": r, "min_imag_H": float(phase.H.imag.min())}


@check("quasimode.transport_residual")
def _tr(cfg):
    geo = shoot_geodesic(_bump(), (0.0, 0.0), (1.0, 0.0), extend=0.5)
    amp = transport_amplitude(solve_riccati(build_fermi_chart(geo, 0.5)))
    r = amp.transport_residual()
    return r < 1e-4, {"residual": r}


@check("quasimode.residual_decays")
def _qres(cfg):
    rels = []
    for vs in (10.0, 20.0):
        M0, chart, sp = _flat_beam(vs)
        qcfg = QuasimodeConfig(delta=1.0)
        beam = make_beam(chart, sp, qcfg)
        grid = band_grid(M0, vs + 10)
        qm = assemble_quasimode(chart, beam.phase, beam.amplitude, sp, qcfg, grid)
        rels.append(quasimode_residual(qm)[2])
    slope = math.log(rels[1] / rels[0]) / math.log(2)
    return slope <= -1, {"rel_10": rels[0], "rel_20": rels[1], "slope": slope}


@check("cylinder.resolvent_bound")
def _resolvent_bound(cfg):
    rng = np.random.default_rng(cfg.seed)
    x = np.arange(-3, 3, 0.01)
    worst = 0.0
    for _ in range(50):
        re = rng.uniform(1, 32) * rng.choice([-1, 1])
        z = re + 1j * rng.uniform(-40, 40)
        f = rng.standard_normal(6) @ np.array([np.exp(-8 * (x - c) ** 2) for c in np.linspace(-1, 1, 6)])
        worst = max(worst, np.linalg.norm(resolvent_solve(z, f, 0.01)) / np.linalg.norm(f) * abs(re))
    return worst <= 1.05, {"max_ratio": float(worst)}


@check("cylinder.resolvent_gaussian_closed_form")
def _resolvent_gaussian(cfg):
    from scipy.special import erfc
    h = 1e-3
    x = np.arange(-12, 12 + h / 2, h)
    u = resolvent_solve(1.0, np.exp(-x**2), h)
    exact = -(math.sqrt(math.pi) / 2) * np.exp(x + 0.25) * erfc(x + 0.5)
    m = np.abs(x) < 5
    err = float(np.max(np.abs(u - exact)[m]))
    return err < 1e-6, {"max_error": err}


@check("cylinder.mode_decoupling")
def _dec(cfg):
    M0 = TransversalManifold()
    basis = dirichlet_eigensystem(band_grid(M0, 12.0), omega2_max=144.0)
    line = LineGrid(1.0, 20, 10)
    eta = -(1.5 + 0.3j)
    R = mode_profiles(eta, 5.0, basis, line)
    single = line_solve(eta, 5.0, basis.eigenvalues[3:4], line.cutoff()[None, :].astype(complex), line.h1)
    err = float(np.max(np.abs(R[3] - single[0])))
    return err < 1e-12, {"max_difference": err}


@check("cylinder.conjugate_pair")
def _cpair(cfg):
    M0, chart, sp = _flat_beam(10.0)
    basis = dirichlet_eigensystem(band_grid(M0, 35.0), omega2_max=35.0**2)
    line = LineGrid(1.0, 20, 10)
    beam = make_beam(chart, sp, QuasimodeConfig(delta=1.0))
    a = assemble_cgo(-1, False, sp, beam, basis, line)
    b = assemble_cgo(-1, True, sp, beam, basis, line)
    err = float(np.max(np.abs(b.field - np.conj(a.field))))
    return err < 1e-10, {"max_difference": err}


def _small_cylinder(h=0.1, k=3.0, manifold=None):
    M0 = manifold or TransversalManifold()
    g = build_grid(M0, h)
    basis = dirichlet_eigensystem(g, omega2_max=np.inf)
    line = LineGrid(1.0, int(round(1 / h)), 0)
    return dtn.Cylinder(basis, line, k)


def _plane_wave(cyl, angles):
    x1 = cyl.line.x_inner[:, None, None]
    P = cyl.grid.points[None]
    a, b = angles
    return np.exp(1j * cyl.k * (math.cos(a) * x1 + math.sin(a) * (math.cos(b) * P[..., 0] + math.sin(b) * P[..., 1])))


@check("dtn.helmholtz_plane_wave_second_order")
def _hpw(cfg):
    errs = []
    for h in (0.1, 0.05):
        cyl = _small_cylinder(h)
        v = _plane_wave(cyl, (0.3, 0.1))
        errs.append(float(np.max(np.abs(dtn.helmholtz_solve(cyl, cyl.trace(v)).values - v))))
    order = math.log2(errs[0] / errs[1])
    return abs(order - 2) < 0.3, {"err_h0.1": errs[0], "err_h0.05": errs[1], "order": order}


def _coef(cyl, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(4)
    x1 = cyl.line.x_inner[:, None, None]
    P = cyl.grid.points[None]
    X, Y = P[..., 0], P[..., 1]
    return np.sin(np.pi * x1) ** 2 * np.maximum(1 - X**2 - Y**2, 0) ** 3 * (a[0] + a[1] * X + a[2] * Y + a[3] * x1 * X)


@check("dtn.source_solve_residual")
def _ssr(cfg):
    cyl = _small_cylinder(0.1)
    src = _coef(cyl).astype(complex)
    w = dtn.source_solve(cyl, src)
    proj = cyl.basis.project(src[1:-1])
    h = cyl.h1
    W = cyl.basis.project(w.values)
    lhs = (W[2:] - 2 * W[1:-1] + W[:-2]) / h**2 + (cyl.k**2 - cyl.basis.eigenvalues) * W[1:-1]
    err = float(np.max(np.abs(lhs - proj)) / np.max(np.abs(proj)))
    return err < 1e-8, {"relative_residual": err}


def _random_trace(cyl, rng):
    x = cyl.line.x_inner
    th = cyl.grid.theta
    side = sum((rng.standard_normal() + 1j * rng.standard_normal()) * np.exp(1j * m * th)[None, :]
               * np.cos(p * x)[:, None] for m in range(-2, 3) for p in range(3))
    lift = cyl.harmonic_lift(side)
    return dtn.BoundaryField(side, lift[[0, -1]])


@check("dtn.polarization_identity")
def _pol(cfg):
    cyl = _small_cylinder(0.1, manifold=_bump())
    rng = np.random.default_rng(cfg.seed)
    fs = [_random_trace(cyl, rng) for _ in range(3)]
    c = _coef(cyl)
    a = dtn.d3_lambda(cyl, c, *fs)
    b = dtn.polarize(cyl, c, *fs)
    d = a - b
    rel = math.sqrt(abs(cyl.boundary_integral(d, d.conj())) / abs(cyl.boundary_integral(a, a.conj())))
    return rel <= 1e-8 and dtn.polarization_scalar(1, 2, 3) == 36, {"relative_discrepancy": rel}


@check("dtn.multilinearity_and_homogeneity")
def _multi(cfg):
    cyl = _small_cylinder(0.1)
    rng = np.random.default_rng(cfg.seed + 1)
    fs = [_random_trace(cyl, rng) for _ in range(3)]
    c = _coef(cyl)
    a = dtn.d3_lambda(cyl, c, *fs)
    a2 = dtn.d3_lambda(cyl, c, fs[0] * 2, fs[1], fs[2])
    lin = float(np.max(np.abs((a2 - a * 2).side)) / np.max(np.abs(a.side)))
    l1 = dtn.lambda_prime(cyl, c, fs[0])
    l2 = dtn.lambda_prime(cyl, c, fs[0] * 2)
    cub = float(np.max(np.abs((l2 - l1 * 8).side)) / np.max(np.abs(l2.side)))
    return lin < 1e-10 and cub < 1e-9, {"linearity_defect": lin, "cubic_defect": cub}


def calderon_single_mode(h, k=3.0, seed=0):
    """(lhs, rhs) of the Calderon pairing for four Bessel single-mode solutions."""
    from scipy.special import jv
    cyl = _small_cylinder(h, k)
    x1 = cyl.line.x_inner[:, None, None]
    P = cyl.grid.points[None]
    R = np.hypot(P[..., 0], P[..., 1])
    TH = np.arctan2(P[..., 1], P[..., 0])

    def mode(m, sgn):
        w = jn_zeros(m, 1)[0]
        a = np.sqrt(complex(k * k - w * w))
        return np.exp(sgn * 1j * a * x1) * jv(m, w * R) * np.cos(m * TH)

    vs = [mode(0, 1), mode(0, -1), mode(1, 1), mode(1, -1)]
    return dtn.calderon_pairing(cyl, _coef(cyl, seed), *vs)


@check("dtn.calderon_identity")
def _cal(cfg):
    d = []
    for h in (0.1, 0.05):
        lhs, rhs = calderon_single_mode(h, seed=cfg.seed)
        d.append(abs(lhs - rhs) / abs(lhs))
    order = math.log2(d[0] / d[1])
    return d[1] <= 0.01 and abs(order - 2) <= 0.3, {"disc_h0.1": d[0], "disc_h0.05": d[1], "order": order}


@check("dtn.noise_calibration")
def _noise(cfg):
    cyl = _small_cylinder(0.1)
    f = _random_trace(cyl, np.random.default_rng(0))
    zero = dtn.BoundaryField.zeros(cyl.basis, cyl.line)
    n1 = dtn.add_noise(cyl, zero, 1e-3, [2.0, 3.0], cfg.seed)
    n2 = dtn.add_noise(cyl, zero, 1e-3, [2.0, 3.0], cfg.seed)
    err = abs(cyl.lp_norm(n1, 4 / 3) - 6e-3) / 6e-3
    same = np.array_equal(n1.side, n2.side) and np.array_equal(n1.caps, n2.caps)
    ident = dtn.add_noise(cyl, f, 0.0, [1.0], cfg.seed) is f
    return err < 1e-12 and same and ident, {"norm_defect": err}


@check("reconstruct.schedule_examples")
def _sched(cfg):
    sig = math.sqrt(5) * 2
    a = parameter_schedule(100, 1e-3, sig, 1.0)
    b = parameter_schedule(2, 1e-3, sig, 1.0)
    ok = (a.case == 1 and a.tau == 1.0 and abs(a.lambda_window - 0.5149) < 1e-4 and b.case == 2
          and abs(b.tau - 3.4539) < 1e-4 and abs(b.lambda_window - 0.22058) < 1e-4)
    return ok, {"case1_window": a.lambda_window, "case2_tau": b.tau, "case2_window": b.lambda_window}


@check("reconstruct.laplace_normalization")
def _lap(cfg):
    err = max(abs(laplace_average(lambda z: np.ones(len(z)), (0.2, -0.1), vs) - 1) for vs in (25, 100, 400))
    return err < 1e-12, {"max_error": err}


@check("reconstruct.orthogonal_pair_at_center")
def _pair(cfg):
    pair = pick_geodesics(TransversalManifold(), (0.0, 0.0))
    return abs(pair.angle - 90) < 1e-6, {"angle_deg": pair.angle}


@check("harness.config_round_trip")
def _cfg(cfg):
    return parse(serialize(cfg)) == cfg, {}


def run_suite(cfg: RunConfig | None = None, only=None):
    """Run every check; returns a list of report entries."""
    cfg = cfg or RunConfig()
    report = []
    for name, fn in CHECKS:
        if only and not any(name.startswith(o) for o in only):
            continue
        t = time.perf_counter()
        try:
            ok, measured = fn(cfg)
            err = None
        except Exception as exc:  # a crashing check is a failed invariant, reported by name
            ok, measured, err = False, {}, f"{type(exc).__name__}: {exc}"
        entry = {"name": name, "passed": bool(ok),
                 "measured": {k: float(v) for k, v in measured.items()},
                 "seconds": round(time.perf_counter() - t, 3)}
        if err:
            entry["error"] = err
        report.append(entry)
    return report

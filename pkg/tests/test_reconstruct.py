import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from cgolab.cylinder import LineGrid
from cgolab.errors import DomainError
from cgolab.geometry import TransversalManifold
from cgolab.reconstruct import (FourierSlice, SmoothBump, cell_seed, guard_tau, invert_fourier, lambda_nodes,
                                laplace_average, noiseless_schedule, parameter_schedule, pick_geodesics, reconstruct,
                                sigma_for, tail_bound, tail_mass, y0_lattice)

SIGMA = math.sqrt(5) * 2


def test_schedule_cases():
    a = parameter_schedule(100, 1e-3, SIGMA, 1.0)
    assert (a.case, a.tau) == (1, 1.0)
    assert a.lambda_window == pytest.approx(math.log(100) / (2 * SIGMA))
    b = parameter_schedule(2, 1e-3, SIGMA, 1.0)
    E = -math.log(1e-3)
    assert b.case == 2 and b.tau == pytest.approx(E / 2)
    assert b.lambda_window == pytest.approx(math.log(4 + E * E) / (4 * SIGMA))
    assert b.lambda_window == pytest.approx(0.22058, abs=1e-5)


@settings(max_examples=100, deadline=None)
@given(k=st.floats(1.01, 1e4), eps=st.floats(1e-12, 0.99))
def test_schedule_case_split(k, eps):
    s = parameter_schedule(k, eps, SIGMA, 1.0)
    assert s.case == (1 if k > -math.log(eps) else 2)
    assert s.tau >= 1.0 or s.case == 2
    assert s.lambda_window > 0


@pytest.mark.parametrize("args", [(4, 0.0), (4, 1.0), (1.0, 1e-3)])
def test_schedule_rejects_bad_input(args):
    with pytest.raises(DomainError):
        parameter_schedule(args[0], args[1], SIGMA, 1.0)


def test_noiseless_schedule_uses_case_one():
    s = noiseless_schedule(16, SIGMA)
    assert s.case == 1 and s.tau == 1.0 and math.isinf(s.E)


def test_guard_tau_moves_off_resonance():
    om = np.array([1.0 + 4.0])  # tau = 2 resonates with omega^2 - k^2 = 4 at k = 1
    t = guard_tau(2.0, 1.0, om)
    assert t > 2.0 and abs(t * t - 4.0) > 1e-6 * (1 + t * t)
    assert guard_tau(2.0, 1.0, np.array([7.0])) == 2.0


def test_sigma_is_sqrt5_times_diameter(flat):
    assert sigma_for(flat) == pytest.approx(SIGMA, rel=1e-9)


def test_orthogonal_pair_at_center(flat):
    pair = pick_geodesics(flat, (0.0, 0.0))
    assert pair.angle == pytest.approx(90.0, abs=1e-6)


@settings(max_examples=8, deadline=None)
@given(r=st.floats(0, 0.6), a=st.floats(0, 2 * math.pi))
def test_pairs_cross_wide_enough_on_bump(bump, r, a):
    pair = pick_geodesics(bump, (r * math.cos(a), r * math.sin(a)))
    assert pair.angle >= 30.0


def test_pick_requires_interior_point(flat):
    with pytest.raises(DomainError):
        pick_geodesics(flat, (1.0, 0.0))


@pytest.mark.parametrize("vs", [25.0, 100.0, 400.0])
def test_laplace_average_moments(vs):
    z0 = (0.2, -0.1)
    assert laplace_average(lambda z: np.ones(len(z)), z0, vs) == pytest.approx(1.0, abs=1e-12)
    affine = lambda z: 1.0 + 2.0 * z[:, 0] - z[:, 1]
    assert laplace_average(affine, z0, vs) == pytest.approx(1.5, abs=1e-12)
    quadratic = lambda z: (z[:, 0] - 0.2) ** 2 + (z[:, 1] + 0.1) ** 2
    assert laplace_average(quadratic, z0, vs) == pytest.approx(1.0 / vs, rel=1e-12)


def test_laplace_error_of_kink_decays_like_inverse_sqrt():
    # E|z1| under the Gaussian weight is 1 / sqrt(pi varsigma): a sharp varsigma^(-1/2) rate
    vs = np.array([25.0, 100.0, 400.0])
    err = [laplace_average(lambda z: np.abs(z[:, 0]), (0.0, 0.0), v, n_nodes=200) for v in vs]
    slope = np.polyfit(np.log(vs), np.log(err), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.02)


def test_bump_fourier_matches_adaptive_quadrature():
    c = SmoothBump(1.3, 0.5, 0.4, (0.1, -0.1), 0.8)
    y0 = np.array([0.2, 0.1])
    for xi in (0.0, 3.0, 11.0):
        re = quad(lambda x: float(c.axial(x)) * math.cos(xi * x), 0, 1, points=[0.1, 0.9], limit=200)[0]
        im = -quad(lambda x: float(c.axial(x)) * math.sin(xi * x), 0, 1, points=[0.1, 0.9], limit=200)[0]
        expected = 1.3 * complex(re, im) * float(c.transversal(y0))
        assert complex(c.fourier(xi, y0)[0]) == pytest.approx(expected, abs=1e-9)


def test_windowed_inverse_recovers_bump_with_wide_window():
    c = SmoothBump(1.0, 0.5, 0.4, (0.0, 0.0), 0.8)
    y0s = np.array([[0.0, 0.0], [0.3, 0.2]])
    lams, lw = lambda_nodes(60.0, 400)
    vals = c.fourier(2 * lams, y0s).T
    sl = FourierSlice(y0s, lams, vals, np.zeros_like(vals.real), lw, 60.0)
    x1 = np.linspace(0, 1, 41)
    truth = c.axial(x1)[None, :] * c.transversal(y0s)[:, None]
    assert np.max(np.abs(invert_fourier(sl, x1) - truth)) < 1e-3


def test_lambda_nodes_are_gauss_legendre():
    x, w = lambda_nodes(0.5, 3)
    assert np.sum(w) == pytest.approx(1.0)
    assert np.sum(w * x**4) == pytest.approx(2 * 0.5**5 / 5)
    with pytest.raises(DomainError):
        lambda_nodes(0.5, 0)


def test_y0_lattice(flat):
    pts, w = y0_lattice(flat, 0.3, 0.4)
    assert len(pts) == 13
    assert np.all(np.hypot(pts[:, 0], pts[:, 1]) <= 0.6 + 1e-12)
    assert np.allclose(w, 0.09)
    with pytest.raises(DomainError):
        y0_lattice(flat, 0.3, 1.5)


def test_tail_mass_decays_under_bound():
    c = SmoothBump(1.0, 0.5, 0.4, (0.0, 0.0), 0.8)
    m = [tail_mass(c, (0.0, 0.0), rho) for rho in (1.0, 4.0, 16.0)]
    assert m[0] > m[1] > m[2] >= 0
    assert tail_bound(2.0, 3.0) == pytest.approx(0.2)


def test_cell_seed_is_deterministic():
    a = np.random.default_rng(cell_seed(5, 1, 2)).standard_normal(3)
    b = np.random.default_rng(cell_seed(5, 1, 2)).standard_normal(3)
    c = np.random.default_rng(cell_seed(5, 2, 1)).standard_normal(3)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_small_noiseless_reconstruction_matches_band_limited_truth(flat):
    c = SmoothBump(1.0, 0.5, 0.4, (0.1, -0.1), 0.8)
    sch = noiseless_schedule(4.0, SIGMA)
    kwargs = dict(eps=0.0, line=LineGrid(1.0, 40, 20), y0_spacing=0.6, margin=0.4)
    res = reconstruct(flat, c, 4.0, sch, SIGMA, **kwargs)
    assert res.failures == []
    assert len(res.slice.y0s) == 5
    assert res.band_error < 0.1
    with ThreadPoolExecutor(2) as pool:
        again = reconstruct(flat, c, 4.0, sch, SIGMA, pool=pool, **kwargs)
    assert np.array_equal(res.slice.values, again.slice.values)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erfc

from cgolab.cylinder import (LineGrid, assemble_cgo, check_resonance, line_solve, mode_profiles,
                             remainder_solve, resolvent_solve)
from cgolab.errors import Resonance, ZeroRealPart
from cgolab.spectral import band_grid, dirichlet_eigensystem

X = np.arange(-4, 4, 0.01)


@settings(max_examples=40, deadline=None)
@given(re=st.floats(1, 32), im=st.floats(-40, 40), neg=st.booleans(),
       amps=st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda a: max(map(abs, a)) > 0.1))
def test_resolvent_operator_bound(re, im, neg, amps):
    z = complex(-re if neg else re, im)
    f = sum(a * np.exp(-10 * (X - c) ** 2) for a, c in zip(amps, (-1.5, -0.5, 0.5, 1.5)))
    assert np.linalg.norm(resolvent_solve(z, f, 0.01)) <= 1.05 * np.linalg.norm(f) / re


@settings(max_examples=20, deadline=None)
@given(re=st.floats(0.5, 8), im=st.floats(-5, 5))
def test_resolvent_solves_the_ode(re, im):
    z = complex(re, im)
    h = 1e-3
    x = np.arange(-6, 6, h)
    f = np.exp(-4 * x**2) * np.cos(3 * x)
    u = resolvent_solve(z, f, h)
    du = np.gradient(u, h)
    assert np.max(np.abs(du - z * u - f)[5:-5]) < 1e-4 * max(1.0, abs(z))


def test_resolvent_gaussian_closed_form():
    h = 1e-3
    x = np.arange(-12, 12 + h / 2, h)
    exact = -(math.sqrt(math.pi) / 2) * np.exp(x + 0.25) * erfc(x + 0.5)
    u = resolvent_solve(1.0, np.exp(-x**2), h)
    assert np.max(np.abs(u - exact)[np.abs(x) < 5]) < 1e-6


def test_resolvent_rejects_zero_real_part():
    with pytest.raises(ZeroRealPart):
        resolvent_solve(1e-14 + 2j, np.ones(5), 0.1)


def test_line_solve_factorization():
    # (d - a)(d - b) r = F with a, b = -eta +- mu: check with second differences
    h = 2e-3
    x = np.arange(-5, 5, h)
    F = np.exp(-6 * x**2)[None, :].astype(complex)
    eta = -(2.0 + 0.5j)
    r = line_solve(eta, 3.0, np.array([20.0]), F, h)[0]
    a = -eta + math.sqrt(11.0)
    b = -eta - math.sqrt(11.0)
    d1 = np.gradient(r, h)
    d2 = np.gradient(d1, h)
    lhs = d2 - (a + b) * d1 + a * b * r
    assert np.max(np.abs(lhs - F[0])[10:-10]) < 1e-4


def test_resonance_guard():
    with pytest.raises(Resonance):
        check_resonance(2.0, 1.0, np.array([5.0]))
    check_resonance(2.0, 1.0, np.array([7.0]))


def test_mode_decoupling(flat_beam_10):
    _, _, basis = flat_beam_10
    line = LineGrid(1.0, 20, 10)
    eta = -(1.5 + 0.3j)
    R = mode_profiles(eta, 5.0, basis, line)
    for j in (0, 3, basis.J - 1):
        single = line_solve(eta, 5.0, basis.eigenvalues[j:j + 1], line.cutoff()[None, :].astype(complex), line.h1)
        assert np.max(np.abs(R[j] - single[0])) <= 1e-12


def test_line_cutoff():
    line = LineGrid(1.0, 10, 8)
    c = line.cutoff()
    assert np.all(c[line.inner] == 1.0)
    assert c[0] == 0.0 and c[-1] == 0.0


def test_cgo_conjugate_pair(flat_beam_10):
    sp, beam, basis = flat_beam_10
    line = LineGrid(1.0, 20, 10)
    a = assemble_cgo(-1, False, sp, beam, basis, line)
    b = assemble_cgo(-1, True, sp, beam, basis, line)
    assert np.max(np.abs(b.field - np.conj(a.field))) < 1e-10


def test_cgo_residual_tracks_band_truncation(flat, flat_beam_10):
    # the beam residual does not vanish where the geodesic leaves the disk, so the
    # Dirichlet band only captures part of it; widening the band must help
    sp, beam, narrow = flat_beam_10
    wide = dirichlet_eigensystem(band_grid(flat, 60.0), omega2_max=3600.0)
    line = LineGrid(1.0, 40, 20)
    a = assemble_cgo(1, False, sp, beam, narrow, line)
    b = assemble_cgo(1, False, sp, beam, wide, line)
    assert b.truncation < 0.6 * a.truncation
    assert b.helmholtz_residual() < 0.6 * a.helmholtz_residual()


def test_remainder_is_linear(flat_beam_10):
    sp, _, basis = flat_beam_10
    line = LineGrid(1.0, 20, 0)
    rng = np.random.default_rng(0)
    shape = (len(line.x),) + basis.grid.shape
    f, g = rng.standard_normal(shape), rng.standard_normal(shape)
    f[:, -1] = g[:, -1] = 0
    lhs = remainder_solve(sp, f + 2 * g, basis, line)
    rhs = remainder_solve(sp, f, basis, line) + 2 * remainder_solve(sp, g, basis, line)
    assert np.allclose(lhs, rhs, atol=1e-12)

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from cgolab.errors import DomainError, GridTooCoarse
from cgolab.geometry import build_fermi_chart, shoot_geodesic
from cgolab.quasimode import (QuasimodeConfig, assemble_quasimode, make_beam, make_spectral_parameter,
                              quasimode_residual, smoothstep_cutoff, solve_riccati, transport_amplitude)
from cgolab.spectral import band_grid, build_grid


@settings(max_examples=300, deadline=None)
@given(k=st.floats(0, 100), tau=st.floats(1, 100), frac=st.floats(-1, 1))
def test_spectral_parameter_estimates(k, tau, frac):
    lam = frac * math.sqrt(k * k + tau * tau - 1)
    assume(k * k + tau * tau - lam * lam >= 1)
    sp = make_spectral_parameter(k, tau, lam)
    assert sp.s.real >= sp.varsigma * (1 - 1e-15)
    assert abs(sp.s.imag) <= math.sqrt(5) * abs(lam) * (1 + 1e-15) + 1e-300
    assert sp.s**2 == pytest.approx(k * k + complex(tau, lam) ** 2, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("k,tau,lam", [(-1.0, 1.0, 0.0), (2.0, 0.5, 0.0), (0.0, 1.0, 0.5)])
def test_inadmissible_parameters(k, tau, lam):
    with pytest.raises(DomainError):
        make_spectral_parameter(k, tau, lam)


@settings(max_examples=50, deadline=None)
@given(r=st.floats(-2, 2))
def test_cutoff_range_and_plateau(r):
    c = float(smoothstep_cutoff(r))
    assert 0.0 <= c <= 1.0
    if abs(r) <= 0.25:
        assert c == 1.0
    if abs(r) >= 0.5:
        assert c == 0.0


def test_flat_riccati_matches_closed_form(flat):
    # H' = -H^2 with H(0) = i gives H = 1 / (t - i)
    geo = shoot_geodesic(flat, (0.0, 0.0), (1.0, 0.0), extend=0.5)
    phase = solve_riccati(build_fermi_chart(geo, 0.5))
    t = np.linspace(0, geo.length, 9)
    assert np.allclose(phase.H_at(t), 1 / (t - 1j), atol=1e-7)
    amp = transport_amplitude(phase)
    # a0 = exp(-1/2 int H) = ((t - i) / (-i))^(-1/2)
    assert np.allclose(amp.a0(t), ((t - 1j) / -1j) ** -0.5, atol=1e-7)


def test_riccati_keeps_positive_imaginary_part(bump):
    geo = shoot_geodesic(bump, (0.1, 0.0), (0.2, 1.0), extend=0.5)
    phase = solve_riccati(build_fermi_chart(geo, 0.5))
    assert np.all(phase.H.imag > 0)
    assert phase.riccati_residual() < 1e-4
    assert transport_amplitude(phase).transport_residual() < 1e-4


def test_beam_concentrates_on_geodesic(flat_beam_10):
    sp, beam, basis = flat_beam_10
    on = abs(beam(np.array([[0.0, 0.0]]))[0])
    off = abs(beam(np.array([[0.0, 0.45]]))[0])
    outside = abs(beam(np.array([[0.0, 0.6]]))[0])
    # at arclength 1 on the flat disk |a0| = |1 + i|^(-1/2)
    assert on == pytest.approx(sp.varsigma ** (1 / 8) * 2 ** -0.25, rel=1e-6)
    assert off < 0.5 * on and outside == 0.0


def test_conjugate_beam_is_conjugate(flat_beam_10):
    _, beam, basis = flat_beam_10
    pts = basis.grid.points
    assert np.allclose(beam.conj()(pts), np.conj(beam(pts)), atol=1e-13)


def test_resolution_guard(flat):
    sp = make_spectral_parameter(math.sqrt(99.0), 1.0, 0.0)
    geo = shoot_geodesic(flat, (0.0, 0.0), (1.0, 0.0), extend=1.0)
    chart = build_fermi_chart(geo, 1.0)
    beam = make_beam(chart, sp, QuasimodeConfig(delta=1.0))
    with pytest.raises(GridTooCoarse):
        assemble_quasimode(chart, beam.phase, beam.amplitude, sp, beam.cfg, build_grid(flat, 0.1))


def test_residual_matches_closed_form_at_varsigma_20(flat):
    # frozen from the closed-form flat-disk residual integrated with Gauss-Legendre (see acceptance oracle)
    sp = make_spectral_parameter(math.sqrt(399.0), 1.0, 0.0)
    geo = shoot_geodesic(flat, (0.0, 0.0), (1.0, 0.0), extend=1.0)
    chart = build_fermi_chart(geo, 1.0)
    qcfg = QuasimodeConfig(delta=1.0)
    beam = make_beam(chart, sp, qcfg)
    qm = assemble_quasimode(chart, beam.phase, beam.amplitude, sp, qcfg, band_grid(flat, 45.0))
    assert quasimode_residual(qm)[2] == pytest.approx(0.0946012048100627, rel=5e-3)


def test_config_validation():
    with pytest.raises(DomainError):
        QuasimodeConfig(delta=0.0)
    with pytest.raises(NotImplementedError):
        QuasimodeConfig(order=4)

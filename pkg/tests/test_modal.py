import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signshift.bessel import hankel1
from signshift.errors import ValidationError
from signshift.lab import load_scenario
from signshift.modal import (LayeredMedium, RingPatch, Source, bump, default_mode_count, dtn_coefficient,
                             dtn_coefficients, field_power_balance, modal_solution, mode_power_balance,
                             solve_radial_mode, transmission_residuals)


def free_medium(R=2.0, k=1.0):
    return LayeredMedium.simple([R], [1.0], [1.0], [1], k)


def cor3_medium():
    return load_scenario("cor3_sigma_0.5").layered_medium()


def ring(r):
    return bump(r, 1.3, 0.1)


def test_dtn_radiation_positivity():
    for kR in (1.0, 5.0, 20.0):
        lam = dtn_coefficients(40, 1.0, kR)
        assert np.all(lam.imag > 0)


def test_dtn_large_argument():
    assert abs(dtn_coefficient(0, 1.0, 100.0) / 1j - 1.0) <= 0.01


@given(st.integers(0, 40), st.floats(0.5, 3.0), st.floats(0.5, 10.0))
def test_dtn_mode_symmetry(n, k, R):
    assert dtn_coefficient(-n, k, R) == dtn_coefficient(n, k, R)


def test_dtn_matches_hankel_quotient():
    k, R, h = 1.3, 2.0, 1e-6
    for n in (0, 1, 5, 12):
        d = (hankel1(n, k * R + h) - hankel1(n, k * R - h)) / (2 * h)
        assert dtn_coefficient(n, k, R) == pytest.approx(k * d / hankel1(n, k * R), rel=1e-8)


def test_layered_medium_validation():
    with pytest.raises(ValidationError):
        LayeredMedium.simple([1.0, 2.0], [1.0, 2.0], [1.0, 1.0], [-1, 1], 1.0)
    with pytest.raises(ValidationError):
        LayeredMedium.simple([1.0, 2.0], [1.0, 1.0], [1.0, 1.0], [1, -1], 1.0)
    with pytest.raises(ValidationError):
        LayeredMedium.simple([2.0], [1.0], [1.0], [1], 0.0)


def test_free_space_ring_source_is_outgoing_hankel():
    sol = solve_radial_mode(free_medium(), 0, lambda r: bump(r, 0.5, 0.05), 0.0, 1024)
    m = sol.r > 0.6
    ratio = sol.u[m] / np.array([hankel1(0, r) for r in sol.r[m]])
    assert np.max(np.abs(ratio / ratio[0] - 1.0)) <= 1e-6


def test_zero_source_zero_solution():
    sol = solve_radial_mode(cor3_medium(), 3, lambda r: np.zeros_like(r), 1e-3, 128)
    assert np.all(sol.u == 0)


def test_radial_self_convergence():
    med = cor3_medium()

    def at(cells):
        return solve_radial_mode(med, 1, ring, 1e-2, cells)

    ref = at(2048)
    errs = []
    for cells in (128, 256):
        s = at(cells)
        errs.append(np.max(np.abs(s.u - ref(s.r))))
    assert 3.0 <= errs[0] / errs[1] <= 5.0


def test_transmission_residuals():
    med = cor3_medium()
    sol = solve_radial_mode(med, 2, ring, 1e-3, 1024)
    res = transmission_residuals(sol, med, ring)
    assert len(res) == len(med.layers) - 1
    assert np.all(res <= 1e-6)


@pytest.mark.parametrize("n", [0, 1, 4])
@pytest.mark.parametrize("delta", [1e-1, 1e-3, 1e-6])
def test_mode_power_balance(n, delta):
    med = cor3_medium()
    sol = solve_radial_mode(med, n, ring, delta, 512)
    assert mode_power_balance(sol, med, ring, 512) <= 1e-8


def test_field_power_balance():
    scn = load_scenario("cor3_sigma_0.5")
    med = scn.layered_medium()
    f = modal_solution(med, scn.source, 1e-4, cells_per_layer=512)
    assert field_power_balance(f, med, scn.source) <= 1e-10


def test_rotationally_symmetric_source_single_mode():
    src = Source((RingPatch(1.3, 0.1, modes=((0, 1.0),)),))
    f = modal_solution(cor3_medium(), src, 1e-2, cells_per_layer=256)
    assert list(f.modes) == [0]


def test_narrow_patch_high_mode_decay():
    med = cor3_medium()
    src = Source((RingPatch(1.3, 0.1, angular_width=0.1),))
    f = modal_solution(med, src, 1e-2, n_modes=40, cells_per_layer=256)
    en = f.mode_energy()
    kR = med.k * med.R
    tail = [en[n] + en[-n] for n in range(int(math.ceil(2 * kR)) + 1, 41)]
    assert np.all(np.diff(tail) < 0)
    assert f.tail < 1e-6


def test_even_source_even_spectrum():
    src = Source((RingPatch(1.3, 0.1, modes=((2, 1.0), (-2, 1.0), (0, 0.5))),))
    f = modal_solution(cor3_medium(), src, 1e-3, cells_per_layer=256)
    np.testing.assert_array_equal(f.modes[2].u, f.modes[-2].u)


def test_mode_count_guard():
    with pytest.raises(ValueError):
        modal_solution(free_medium(R=10.0), Source((RingPatch(1.0, 0.1, modes=((0, 1.0),)),)), 1e-2, n_modes=10)
    assert default_mode_count(1.0, 2.5) == 16
    assert default_mode_count(5.0, 2.5) == 2 * 13 + 8


def test_l2_annulus_parseval_vs_quadrature():
    scn = load_scenario("cor3_sigma_0.5")
    f = modal_solution(scn.layered_medium(), scn.source, 1e-2, cells_per_layer=512)
    r = np.linspace(1.05, 1.15, 401)
    th = 2 * np.pi * np.arange(256) / 256
    R, T = np.meshgrid(r, th, indexing="ij")
    u = f(np.stack([R.ravel() * np.cos(T.ravel()), R.ravel() * np.sin(T.ravel())], axis=1)).reshape(R.shape)
    quad = np.trapezoid(np.sum(np.abs(u) ** 2, axis=1) * (2 * np.pi / 256) * r, r)
    assert f.l2_annulus(1.05, 1.15) == pytest.approx(math.sqrt(quad), rel=1e-4)


@settings(max_examples=10)
@given(st.floats(1e-6, 1e-1))
def test_lemma_bound_single_constant(delta):
    """|u|_H1^2 <= C (|(f,u)|/delta + |f|^2) with the constant frozen from the FEM sweep (plus 10%)."""
    scn = load_scenario("cor3_sigma_0.5")
    med = scn.layered_medium()
    f = modal_solution(med, scn.source, delta, cells_per_layer=256)
    pair, fn2 = f.source_pairing(scn.source)
    h1 = f.h1_annulus(0.0, med.R) ** 2
    assert h1 <= 1.1 * 0.1755180102 * (abs(pair) / delta + fn2)

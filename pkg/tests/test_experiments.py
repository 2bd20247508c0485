import math

import numpy as np
import pytest

from qndsim.errors import InvalidInputError
from qndsim.experiments import (LeggettGargConfig, commutator_amplitude,
                                default_dT_grid, leggett_garg_run,
                                qnd_harmonic_scan, squid_initial_state,
                                squid_scan, two_level_lg_oracle, well_sigma)
from qndsim.measurement import GaussianKernel, WindowKernel
from qndsim.sequence import position_moments
from qndsim.spectral import DoubleWell, compute_spectrum, harmonic_spectrum, reformation_time


@pytest.fixture(scope="module")
def ho():
    return harmonic_spectrum(M=32)


@pytest.fixture(scope="module")
def dw():
    return compute_spectrum(DoubleWell(), 16, hbar=0.2, richardson=True)


@pytest.fixture(scope="module")
def dw_deep():
    return compute_spectrum(DoubleWell(), 16, hbar=0.1, richardson=True)


def test_commutator_examples():
    assert commutator_amplitude(1, 1, 1, math.pi) == pytest.approx(0, abs=1e-15)
    assert commutator_amplitude(1, 1, 1, math.pi / 2) == pytest.approx(1)
    assert commutator_amplitude(1, 1, 1, 2 * math.pi) == pytest.approx(0, abs=1e-15)
    assert commutator_amplitude(2, 3, 0.5, 0.1) == pytest.approx(
        0.5 / 6 * math.sin(0.3))
    with pytest.raises(InvalidInputError):
        commutator_amplitude(0, 1, 1, 1)


def test_default_grid_excludes_zero():
    g = default_dT_grid(2.0, 4)
    np.testing.assert_allclose(g, [0.5, 1.0, 1.5, 2.0])


def test_harmonic_curve_is_periodic(ho):
    base = np.array([0.4, 1.1, 2.5, math.pi])
    grid = np.concatenate([base, base + 2 * math.pi])
    curve = qnd_harmonic_scan(N=4, dT_grid=grid, spectrum=ho)
    np.testing.assert_allclose(curve.da_eff[:4], curve.da_eff[4:], rtol=1e-4)


def test_harmonic_curve_flat_for_wide_kernel(ho):
    curve = qnd_harmonic_scan(kernel=GaussianKernel(20.0), N=4,
                              dT_grid=default_dT_grid(2 * math.pi, 16), spectrum=ho)
    assert curve.da_eff.max() / curve.da_eff.min() < 1.05


def test_harmonic_scan_minimum_small(ho):
    grid = default_dT_grid(2 * math.pi, 16)
    curve = qnd_harmonic_scan(N=4, dT_grid=grid, spectrum=ho)
    assert abs(curve.dT[curve.argmin()] - math.pi) <= grid[1] - grid[0] + 1e-12
    assert curve.meta["spectrum_max_rel_error"] < 1e-6
    assert curve.meta["mode"] == "linear"


def test_harmonic_scan_deterministic(ho):
    grid = [0.7, 1.9]
    a = qnd_harmonic_scan(N=3, dT_grid=grid, spectrum=ho)
    b = qnd_harmonic_scan(N=3, dT_grid=grid, spectrum=ho, threads=2)
    np.testing.assert_array_equal(a.da_eff, b.da_eff)
    np.testing.assert_array_equal(a.a_tilde, b.a_tilde)


def test_squid_initial_state_is_left(dw):
    c = squid_initial_state(dw)
    mean, _ = position_moments(dw, c)
    assert mean < -0.8
    assert np.linalg.norm(c.amplitudes) == pytest.approx(1.0)


def test_two_level_mirror_identity(dw):
    # For a pure doublet U(T12/2) is parity times a phase, so the scan cannot
    # tell T12/2 from T12.
    two = dw.truncated(2)
    T12 = reformation_time(two, 1, 2)
    scan = squid_scan(hbar=0.2, N=4, dT_grid=[0.5 * T12, T12, 1.5 * T12, 2 * T12],
                      spectrum=two)
    np.testing.assert_allclose(scan.curve.da_eff, scan.curve.da_eff[0], rtol=1e-9)
    assert scan.T12 == pytest.approx(T12)


def test_two_level_model_matches_full_minima(dw_deep):
    T12 = reformation_time(dw_deep, 1, 2)
    grid = default_dT_grid(T12, 20, span=2.5)
    step = grid[1] - grid[0]
    kernel = GaussianKernel(0.5)
    full = squid_scan(hbar=0.1, kernel=kernel, N=4, dT_grid=grid, spectrum=dw_deep,
                      threads=4).curve
    two = squid_scan(hbar=0.1, kernel=kernel, N=4, dT_grid=grid,
                     spectrum=dw_deep.truncated(2), threads=4).curve
    full_min = np.sort(full.dT[full.local_minima()[:4]])
    two_min = np.sort(two.dT[two.local_minima()[:4]])
    assert np.all(np.abs(full_min - two_min) <= step + 1e-9)
    np.testing.assert_allclose(two_min / T12, [0.5, 1.0, 1.5, 2.0], atol=1e-9)
    for i in full.local_minima()[:4]:
        assert abs(abs(full.a_tilde[i]) - 1.0) < 0.2


def test_squid_scan_reports_parameters(dw):
    scan = squid_scan(hbar=0.2, N=2, dT_grid=[10.0, 20.0], spectrum=dw)
    meta = scan.curve.meta
    assert meta["T12"] == pytest.approx(reformation_time(dw, 1, 2))
    assert meta["potential"] == {"kind": "double_well", "mu": 1.0, "lambda": 1.0, "m": 1.0}
    assert meta["kernel"]["da"] == pytest.approx(well_sigma(DoubleWell(), 0.2))
    assert meta["doublet_ratio"] < 0.1


def test_lg_config_validation():
    k = GaussianKernel(1.0)
    with pytest.raises(InvalidInputError):
        LeggettGargConfig(DoubleWell(), 0.0, 1.0, k)
    with pytest.raises(InvalidInputError):
        LeggettGargConfig(DoubleWell(), 1.0, 1.0, k, trials=0)
    with pytest.raises(InvalidInputError):
        LeggettGargConfig(DoubleWell(), 1.0, 1.0, k, measurement="weak")


def _omega12(spec):
    return (spec.energies[1] - spec.energies[0]) / spec.hbar


@pytest.mark.parametrize("phase", [math.pi / 3, math.pi / 2, 1.0])
def test_projective_two_level_oracle(dw, phase):
    tau = phase / _omega12(dw)
    cfg = LeggettGargConfig(DoubleWell(), tau, tau, WindowKernel(2.0),
                            trials=20000, seed=3, measurement="projective")
    res = leggett_garg_run(cfg, dw)
    target = two_level_lg_oracle(_omega12(dw), tau)
    assert abs(res.K - target) < 3 * res.se_K
    assert abs(res.C12 - math.cos(phase)) < 3 * res.se12 + 0.02


def test_oracle_maximum():
    w = np.linspace(0.01, math.pi, 10001)
    K = [two_level_lg_oracle(1.0, t) for t in w]
    assert max(K) == pytest.approx(1.5, abs=1e-7)
    assert w[int(np.argmax(K))] == pytest.approx(math.pi / 3, abs=1e-3)


def test_full_reformation_correlators(dw):
    T12 = reformation_time(dw, 1, 2)
    cfg = LeggettGargConfig(DoubleWell(), T12, T12, WindowKernel(2.0),
                            trials=20000, seed=4, measurement="projective")
    r = leggett_garg_run(cfg, dw)
    tol = 1e-12
    assert abs(r.C12 - r.C23) <= 3 * math.hypot(r.se12, r.se23) + tol
    assert abs(r.C12 - r.C13) <= 3 * math.hypot(r.se12, r.se13) + tol
    assert abs(r.K - r.C12) <= 3 * r.se_K + 3 * r.se12 + tol


def test_full_reformation_kernel_mode(dw):
    T12 = reformation_time(dw, 1, 2)
    cfg = LeggettGargConfig(DoubleWell(), T12, T12, GaussianKernel(0.6),
                            trials=4000, seed=5)
    r = leggett_garg_run(cfg, dw.truncated(2))
    assert abs(r.C12 - r.C23) < 3 * math.hypot(r.se12, r.se23)
    assert abs(r.C12 - r.C13) < 3 * math.hypot(r.se12, r.se13)


def test_correlators_bounded_and_zero_results(dw):
    T12 = reformation_time(dw, 1, 2)
    cfg = LeggettGargConfig(DoubleWell(), T12 / 2, T12 / 2, GaussianKernel(0.3),
                            trials=2000, seed=1)
    r = leggett_garg_run(cfg, dw)
    for c in (r.C12, r.C23, r.C13):
        assert -1 - 1e-12 <= c <= 1 + 1e-12
    assert r.zero_results == 0
    assert set(np.unique(r.q)) <= {-1, 1}
    assert r.q.shape == (2000, 3) and r.q13.shape == (2000, 2)


def test_odd_result_grid_counts_zeros(dw):
    T12 = reformation_time(dw, 1, 2)
    cfg = LeggettGargConfig(DoubleWell(), T12 / 2, T12 / 2, GaussianKernel(6.0),
                            trials=2000, seed=1, a_points=41)
    r = leggett_garg_run(cfg, dw)
    assert r.zero_results > 0


def test_standard_error_scaling(dw):
    T12 = reformation_time(dw, 1, 2)
    se = []
    for trials in (4000, 16000):
        cfg = LeggettGargConfig(DoubleWell(), T12 / 3, T12 / 3, WindowKernel(2.0),
                                trials=trials, seed=9, measurement="projective")
        se.append(leggett_garg_run(cfg, dw).se_K)
    assert se[0] / se[1] == pytest.approx(2.0, rel=0.2)


def test_lg_reproducible(dw):
    T12 = reformation_time(dw, 1, 2)
    cfg = LeggettGargConfig(DoubleWell(), T12 / 2, T12 / 2, GaussianKernel(0.5),
                            trials=500, seed=12)
    a, b = leggett_garg_run(cfg, dw), leggett_garg_run(cfg, dw)
    np.testing.assert_array_equal(a.q, b.q)
    assert a.as_dict() == b.as_dict()

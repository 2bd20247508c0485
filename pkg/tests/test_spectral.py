import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import dense_fd_levels
from qndsim.errors import DegeneracyError, InvalidInputError, SolverError
from qndsim.spectral import (DoubleWell, Grid1D, Harmonic, Tabulated,
                             build_hamiltonian, compute_spectrum,
                             harmonic_oracle, harmonic_spectrum,
                             inverse_iteration, reformation_time,
                             solve_spectrum)

HO_GRID = Grid1D(-10.0, 10.0, 2001)


@pytest.fixture(scope="module")
def ho_raw():
    return solve_spectrum(build_hamiltonian(HO_GRID, Harmonic()), 10)


def box_levels(n, M):
    grid = Grid1D(0.0, 1.0, n)
    pot = Tabulated(np.zeros(n), grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # walls, not tails
        return solve_spectrum(build_hamiltonian(grid, pot), M).energies


def test_grid_validation():
    with pytest.raises(InvalidInputError):
        Grid1D(0, 1, 2)
    with pytest.raises(InvalidInputError):
        Grid1D(1, 0, 11)
    with pytest.raises(InvalidInputError):
        Grid1D(0, 1, 10).coarsened()
    assert Grid1D(0, 1, 11).coarsened().n == 6


def test_potential_validation():
    with pytest.raises(InvalidInputError):
        DoubleWell(1, -1, 1)
    with pytest.raises(InvalidInputError):
        Harmonic(0, 1)
    with pytest.raises(InvalidInputError):
        Tabulated(np.zeros(5), Grid1D(0, 1, 6))


def test_hamiltonian_is_three_point_stencil():
    grid = Grid1D(-1, 1, 9)
    ham = build_hamiltonian(grid, Harmonic(2.0, 1.5), hbar=0.7)
    h = grid.h
    k = 0.7 ** 2 / (2 * 2.0 * h ** 2)
    np.testing.assert_allclose(ham.off_diagonal, -k)
    np.testing.assert_allclose(ham.diagonal,
                               2 * k + 0.5 * 2.0 * 1.5 ** 2 * grid.x[1:-1] ** 2)
    v = np.random.default_rng(1).standard_normal(ham.size)
    np.testing.assert_allclose(ham.matvec(v), ham.toarray() @ v)


def test_raw_harmonic_levels_match_dense_oracle(ho_raw):
    dense = dense_fd_levels(HO_GRID.x, Harmonic(), 10)
    np.testing.assert_allclose(ho_raw.energies, dense, rtol=1e-11)


def test_raw_harmonic_error_is_second_order(ho_raw):
    exact = harmonic_oracle(1, 1, 1, 10)
    err = np.abs(ho_raw.energies - exact) / exact
    assert err.max() < 1e-4
    coarse = solve_spectrum(build_hamiltonian(HO_GRID.coarsened(), Harmonic()), 10)
    err2 = np.abs(coarse.energies - exact) / exact
    order = np.log2(err2 / err)
    assert np.all((order > 1.8) & (order < 2.2))


def test_richardson_reaches_oracle():
    spec = harmonic_spectrum(M=10, grid=HO_GRID)
    exact = harmonic_oracle(1, 1, 1, 10)
    assert spec.extrapolated
    assert np.max(np.abs(spec.energies - exact) / exact) < 1e-7
    np.testing.assert_allclose(spec.raw_energies, exact, rtol=1e-4)


def test_particle_in_box():
    n = 1001
    e = box_levels(n, 5)
    h = 1.0 / (n - 1)
    k = np.arange(1, 6)
    fd_exact = (2 / h ** 2) * np.sin(k * math.pi * h / 2) ** 2 / 1.0
    np.testing.assert_allclose(e, fd_exact, rtol=1e-10)
    np.testing.assert_allclose(e, (k * math.pi) ** 2 / 2, rtol=1e-4)


def test_box_convergence_order():
    exact = (np.arange(1, 4) * math.pi) ** 2 / 2
    e1 = np.abs(box_levels(201, 3) - exact)
    e2 = np.abs(box_levels(401, 3) - exact)
    order = np.log2(e1 / e2)
    assert np.all((order > 1.8) & (order < 2.2))


def test_eigenvectors_orthonormal_and_residuals(ho_raw):
    np.testing.assert_allclose(ho_raw.overlap_matrix(), np.eye(10), atol=1e-10)
    ham = build_hamiltonian(HO_GRID, Harmonic())
    phi = ho_raw.states[1:-1]
    r = ham.matvec(phi) - phi * ho_raw.energies
    assert np.max(np.linalg.norm(r, axis=0) * math.sqrt(HO_GRID.h)) < 1e-8


def test_parity_of_symmetric_potential(ho_raw):
    for k in range(10):
        phi = ho_raw.states[:, k]
        np.testing.assert_allclose(phi[::-1], (-1) ** k * phi, atol=1e-9)


def test_sign_convention_is_deterministic(ho_raw):
    for k in range(10):
        phi = ho_raw.states[:, k]
        big = np.flatnonzero(np.abs(phi) > 1e-3 * np.abs(phi).max())
        assert phi[big[0]] > 0


@pytest.mark.filterwarnings("ignore:level .* tail mass")
def test_full_basis_reconstruction():
    grid = Grid1D(-6, 6, 121)
    spec = solve_spectrum(build_hamiltonian(grid, DoubleWell()), grid.n - 2)
    psi = np.zeros(grid.n)
    psi[1:-1] = np.random.default_rng(3).standard_normal(grid.n - 2)
    np.testing.assert_allclose(spec.synthesize(spec.project(psi)), psi, atol=1e-10)


def test_double_well_levels_match_dense_oracle():
    grid = Grid1D(-5, 5, 801)
    pot = DoubleWell(1, 1, 1)
    spec = solve_spectrum(build_hamiltonian(grid, pot, 0.2), 8)
    np.testing.assert_allclose(spec.energies,
                               dense_fd_levels(grid.x, pot, 8, hbar=0.2),
                               rtol=1e-10, atol=1e-12)
    assert spec.energies[0] > pot.minimum()


def test_double_well_doublet_at_small_hbar():
    spec = compute_spectrum(DoubleWell(), 4, hbar=0.2, richardson=True)
    e = spec.energies
    assert e[1] - e[0] < 0.1 * (e[2] - e[1])
    assert e[1] < DoubleWell().barrier_height


def test_reformation_time():
    spec = harmonic_spectrum(M=4)
    assert reformation_time(spec, 1, 2) == pytest.approx(2 * math.pi, rel=1e-7)
    assert reformation_time(spec, 3, 1) == pytest.approx(math.pi, rel=1e-7)
    with pytest.raises(InvalidInputError):
        reformation_time(spec, 2, 2)


def test_reformation_time_degenerate():
    grid = Grid1D(0, 1, 5)
    from qndsim.spectral import Spectrum
    states = np.zeros((5, 2))
    states[1, 0] = states[3, 1] = 2.0
    spec = Spectrum(np.array([1.0, 1.0]), states, 1.0, grid)
    with pytest.raises(DegeneracyError):
        reformation_time(spec, 1, 2)


def test_inverse_iteration_refines_level():
    ham = build_hamiltonian(Grid1D(-8, 8, 801), Harmonic())
    e, v = inverse_iteration(ham, 2.4)
    assert e == pytest.approx(2.5, rel=1e-3)
    assert np.linalg.norm(ham.matvec(v) - e * v) < 1e-9


def test_solver_rejects_bad_M():
    ham = build_hamiltonian(Grid1D(-1, 1, 11), Harmonic())
    with pytest.raises(InvalidInputError):
        solve_spectrum(ham, 10)
    with pytest.raises(InvalidInputError):
        solve_spectrum(ham, 0)


def test_narrow_domain_warns():
    with pytest.warns(RuntimeWarning, match="tail mass"):
        solve_spectrum(build_hamiltonian(Grid1D(-3, 3, 301), Harmonic()), 10)


def test_solver_error_carries_residual():
    err = SolverError("did not converge", 1e-3)
    assert err.worst_residual == 1e-3 and err.exit_code == 3


def test_auto_grid_covers_requested_levels():
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        spec = harmonic_spectrum(M=32)
    assert spec.grid.n % 2 == 1
    exact = harmonic_oracle(1, 1, 1, 32)
    assert np.max(np.abs(spec.energies - exact) / exact) < 1e-6


@settings(max_examples=15, deadline=None)
@given(m=st.floats(0.3, 3.0), omega=st.floats(0.3, 3.0),
       hbar=st.floats(0.3, 2.0))
def test_harmonic_scaling(m, omega, hbar):
    spec = compute_spectrum(Harmonic(m, omega), 4, hbar, richardson=True)
    np.testing.assert_allclose(spec.energies, harmonic_oracle(m, omega, hbar, 4),
                               rtol=1e-6)

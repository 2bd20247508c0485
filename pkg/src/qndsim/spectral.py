"""Finite-difference spectra of one-dimensional Hamiltonians.

``H = p^2/2m + V(x)`` is discretized with the 3-point Laplacian on the
interior of a uniform grid (Dirichlet ends), giving a real symmetric
tridiagonal matrix.  Eigenfunctions are stored on the *full* grid, with the
two boundary samples pinned to zero, and normalized so that the trapezoid
rule on the grid gives unit norm.

Levels are indexed from 1 everywhere a level number is part of the public
interface (``reformation_time``, ``Spectrum.level``); arrays are indexed
from 0 as usual.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.optimize import brentq

from .errors import DegeneracyError, InvalidInputError, SolverError

RESIDUAL_TOL = 1e-8
TAIL_MASS_TOL = 1e-8


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid ``x_min, x_min + h, ..., x_max`` with ``n`` points."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise InvalidInputError(f"grid needs n >= 3 points, got {self.n}")
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise InvalidInputError("grid bounds must be finite")
        if not self.x_max > self.x_min:
            raise InvalidInputError(
                f"grid needs x_max > x_min, got [{self.x_min}, {self.x_max}]")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def coarsened(self) -> "Grid1D":
        """The nested grid with spacing ``2h`` (needs an odd point count)."""
        if self.n % 2 == 0:
            raise InvalidInputError(
                "Richardson coarsening needs an odd number of grid points")
        return Grid1D(self.x_min, self.x_max, (self.n - 1) // 2 + 1)


@dataclass(frozen=True)
class Harmonic:
    m: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise InvalidInputError(f"Harmonic: mass m must be > 0, got {self.m}")
        if not self.omega > 0:
            raise InvalidInputError(
                f"Harmonic: frequency omega must be > 0, got {self.omega}")

    def __call__(self, x):
        return 0.5 * self.m * self.omega ** 2 * np.asarray(x, dtype=float) ** 2

    @property
    def symmetric(self) -> bool:
        return True

    def minimum(self) -> float:
        return 0.0

    def parameters(self) -> dict:
        return {"kind": "harmonic", "m": self.m, "omega": self.omega}


@dataclass(frozen=True)
class DoubleWell:
    """Bistable flux potential ``-mu x^2/2 + lam x^4/4``."""

    mu: float = 1.0
    lam: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise InvalidInputError(f"DoubleWell: mass m must be > 0, got {self.m}")
        if not self.mu > 0:
            raise InvalidInputError(f"DoubleWell: mu must be > 0, got {self.mu}")
        if not self.lam > 0:
            raise InvalidInputError(
                f"DoubleWell: lambda must be > 0, got {self.lam}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * self.mu * x ** 2 + 0.25 * self.lam * x ** 4

    @property
    def symmetric(self) -> bool:
        return True

    @property
    def well_position(self) -> float:
        return math.sqrt(self.mu / self.lam)

    @property
    def barrier_height(self) -> float:
        return self.mu ** 2 / (4.0 * self.lam)

    def minimum(self) -> float:
        return -self.barrier_height

    def parameters(self) -> dict:
        return {"kind": "double_well", "mu": self.mu, "lambda": self.lam,
                "m": self.m}


@dataclass(frozen=True)
class Tabulated:
    """Potential given by its samples on a specific grid."""

    values: np.ndarray
    grid: Grid1D
    m: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise InvalidInputError(f"Tabulated: mass m must be > 0, got {self.m}")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise InvalidInputError(
                f"tabulated potential has {values.size} values for a "
                f"{self.grid.n}-point grid")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __call__(self, x):
        return np.interp(x, self.grid.x, self.values)

    @property
    def symmetric(self) -> bool:
        return False

    def minimum(self) -> float:
        return float(np.min(self.values))

    def parameters(self) -> dict:
        return {"kind": "tabulated", "m": self.m, "n": self.grid.n}


PotentialSpec = Union[Harmonic, DoubleWell, Tabulated]


@dataclass(frozen=True)
class TridiagonalHamiltonian:
    """Interior-point operator: ``diagonal`` has ``n - 2`` entries."""

    diagonal: np.ndarray
    off_diagonal: np.ndarray
    grid: Grid1D
    hbar: float
    potential: PotentialSpec | None = None

    @property
    def size(self) -> int:
        return self.diagonal.size

    def toarray(self) -> np.ndarray:
        return (np.diag(self.diagonal) + np.diag(self.off_diagonal, 1)
                + np.diag(self.off_diagonal, -1))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        shape = (-1,) + (1,) * (v.ndim - 1)
        d = self.diagonal.reshape(shape)
        e = self.off_diagonal.reshape(shape)
        out = d * v
        out[:-1] += e * v[1:]
        out[1:] += e * v[:-1]
        return out


def build_hamiltonian(grid: Grid1D, potential: PotentialSpec,
                      hbar: float = 1.0) -> TridiagonalHamiltonian:
    """Assemble the 3-point finite-difference Hamiltonian.

    The diagonal is ``hbar^2/(m h^2) + V(x_i)`` and the off-diagonal
    ``-hbar^2/(2 m h^2)``, for the ``n - 2`` interior points.
    """
    if not hbar > 0:
        raise InvalidInputError(f"hbar must be > 0, got {hbar}")
    if isinstance(potential, Tabulated):
        if potential.grid != grid:
            raise InvalidInputError(
                "tabulated potential was sampled on a different grid")
        v = np.asarray(potential.values)[1:-1]
    else:
        v = potential(grid.x[1:-1])
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("potential has non-finite values on the grid")
    kinetic = hbar ** 2 / (potential.m * grid.h ** 2)
    diagonal = kinetic + v
    off = np.full(grid.n - 3, -0.5 * kinetic)
    diagonal.setflags(write=False)
    off.setflags(write=False)
    return TridiagonalHamiltonian(diagonal, off, grid, float(hbar), potential)


@dataclass(frozen=True)
class Spectrum:
    """Lowest ``M`` eigenpairs, eigenfunctions sampled on the full grid.

    ``states`` has shape ``(grid.n, M)``; column ``k`` is level ``k + 1``.
    """

    energies: np.ndarray
    states: np.ndarray
    hbar: float
    grid: Grid1D
    potential: PotentialSpec | None = None
    extrapolated: bool = False
    raw_energies: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        energies = np.array(self.energies, dtype=float)
        states = np.array(self.states, dtype=float)
        if states.shape != (self.grid.n, energies.size):
            raise InvalidInputError(
                f"states shape {states.shape} does not match grid "
                f"{self.grid.n} x {energies.size} levels")
        if np.any(np.diff(energies) < 0):
            raise InvalidInputError("energies must be in ascending order")
        energies.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "states", states)
        if self.raw_energies is None:
            object.__setattr__(self, "raw_energies", energies)

    @property
    def size(self) -> int:
        return self.energies.size

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def level(self, k: int) -> tuple[float, np.ndarray]:
        """Energy and eigenfunction of 1-based level ``k``."""
        if not 1 <= k <= self.size:
            raise InvalidInputError(
                f"level {k} outside 1..{self.size}")
        return float(self.energies[k - 1]), self.states[:, k - 1]

    def overlap_matrix(self) -> np.ndarray:
        w = self.grid.trapezoid_weights()
        return self.states.T @ (w[:, None] * self.states)

    def project(self, psi: np.ndarray) -> np.ndarray:
        """Eigenbasis amplitudes of a grid-sampled wavefunction."""
        w = self.grid.trapezoid_weights()
        return self.states.T @ (w * np.asarray(psi))

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        """Grid wavefunction ``sum_m c_m phi_m(x)``."""
        return self.states @ np.asarray(c)

    def truncated(self, M: int) -> "Spectrum":
        if not 1 <= M <= self.size:
            raise InvalidInputError(f"cannot truncate {self.size} levels to {M}")
        return Spectrum(self.energies[:M], self.states[:, :M], self.hbar,
                        self.grid, self.potential, self.extrapolated,
                        self.raw_energies[:M])


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # Deterministic phase: the leftmost significant lobe of each vector is positive.
    out = vectors.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        big = np.flatnonzero(np.abs(col) > 1e-3 * np.max(np.abs(col)))
        if big.size and col[big[0]] < 0:
            out[:, k] = -col
    return out


def inverse_iteration(hamiltonian: TridiagonalHamiltonian, shift: float,
                      v0: np.ndarray | None = None, tol: float = 1e-13,
                      maxiter: int = 50) -> tuple[float, np.ndarray]:
    """Refine one eigenpair near ``shift`` by shifted inverse iteration.

    Returns the Rayleigh quotient and the unit (Euclidean) eigenvector on the
    interior points.
    """
    n = hamiltonian.size
    ab = np.zeros((3, n))
    ab[0, 1:] = hamiltonian.off_diagonal
    ab[2, :-1] = hamiltonian.off_diagonal
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n) if v0 is None else np.array(v0, dtype=float)
    v /= np.linalg.norm(v)
    # Nudge the shift off the exact eigenvalue to keep the system nonsingular.
    scale = max(abs(shift), np.max(np.abs(hamiltonian.diagonal)))
    sigma = shift + 1e-12 * scale
    ab[1] = hamiltonian.diagonal - sigma
    energy = shift
    for _ in range(maxiter):
        w = solve_banded((1, 1), ab, v)
        v = w / np.linalg.norm(w)
        hv = hamiltonian.matvec(v)
        energy = float(v @ hv)
        if np.linalg.norm(hv - energy * v) <= tol * scale:
            break
    return energy, v


def _residuals(hamiltonian, energies, vectors):
    r = hamiltonian.matvec(vectors) - vectors * energies[None, :]
    scale = np.maximum(np.abs(energies), max(energies[-1] - energies[0], 1e-300))
    return np.linalg.norm(r, axis=0) / scale


def _tail_mass(grid: Grid1D, phi: np.ndarray) -> float:
    k = max(1, grid.n // 10)
    w = grid.trapezoid_weights()
    dens = w * phi ** 2
    return float(dens[:k].sum() + dens[-k:].sum())


def solve_spectrum(hamiltonian: TridiagonalHamiltonian, M: int) -> Spectrum:
    """Lowest ``M`` eigenpairs of a tridiagonal Hamiltonian.

    Uses LAPACK's tridiagonal solver; any level whose relative residual
    exceeds ``RESIDUAL_TOL`` is re-polished by inverse iteration before the
    solver gives up with :class:`SolverError`.
    """
    grid = hamiltonian.grid
    if not 1 <= M <= grid.n - 2:
        raise InvalidInputError(f"need 1 <= M <= n - 2 = {grid.n - 2}, got M={M}")
    energies, vectors = eigh_tridiagonal(
        hamiltonian.diagonal, hamiltonian.off_diagonal, select="i",
        select_range=(0, M - 1))
    res = _residuals(hamiltonian, energies, vectors)
    for k in np.flatnonzero(res > RESIDUAL_TOL):
        energies[k], vectors[:, k] = inverse_iteration(
            hamiltonian, energies[k], vectors[:, k])
    res = _residuals(hamiltonian, energies, vectors)
    if np.any(res > RESIDUAL_TOL):
        raise SolverError(f"{np.count_nonzero(res > RESIDUAL_TOL)} of {M} "
                          "levels did not converge", float(res.max()))
    order = np.argsort(energies, kind="stable")
    energies, vectors = energies[order], vectors[:, order]
    vectors = _fix_signs(vectors)
    states = np.zeros((grid.n, M))
    states[1:-1] = vectors / math.sqrt(grid.h)
    tail = _tail_mass(grid, states[:, -1])
    if tail > TAIL_MASS_TOL:
        warnings.warn(
            f"level {M} has tail mass {tail:.2e} in the outer 10% of the grid; "
            "widen the domain", RuntimeWarning, stacklevel=2)
    return Spectrum(energies, states, hamiltonian.hbar, grid,
                    hamiltonian.potential)


def compute_spectrum(potential: PotentialSpec, M: int, hbar: float = 1.0,
                     grid: Grid1D | None = None,
                     richardson: bool = False) -> Spectrum:
    """Build and solve in one call, optionally Richardson-extrapolating.

    With ``richardson=True`` the energies are ``(4 E_h - E_2h) / 3`` from the
    given grid and its nested coarsening, which cancels the O(h^2) error of
    the 3-point stencil.  Eigenfunctions always come from the fine grid; the
    unextrapolated energies are kept in ``raw_energies``.
    """
    if grid is None:
        if isinstance(potential, Tabulated):
            grid = potential.grid
        else:
            grid = auto_grid(potential, M, hbar)
    spectrum = solve_spectrum(build_hamiltonian(grid, potential, hbar), M)
    if not richardson:
        return spectrum
    coarse = grid.coarsened()
    if isinstance(potential, Tabulated):
        coarse_pot = Tabulated(potential.values[::2], coarse, potential.m)
    else:
        coarse_pot = potential
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        coarse_spec = solve_spectrum(
            build_hamiltonian(coarse, coarse_pot, hbar), M)
    energies = (4.0 * spectrum.energies - coarse_spec.energies) / 3.0
    # Extrapolation cannot reorder a resolved spectrum, but guard anyway.
    energies = np.maximum.accumulate(energies)
    return Spectrum(energies, spectrum.states, hbar, grid, potential,
                    extrapolated=True, raw_energies=spectrum.energies)


def _outer_turning_point(potential: PotentialSpec, energy: float) -> float:
    f = lambda x: float(potential(x)) - energy
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    lo = 0.0 if f(0.0) < 0 else hi / 2.0
    if f(lo) >= 0:
        return hi
    return brentq(f, lo, hi, xtol=1e-12)


def auto_grid(potential: PotentialSpec, M: int, hbar: float = 1.0,
              points_per_wavelength: float = 120.0,
              max_points: int = 40001) -> Grid1D:
    """Symmetric grid sized for the lowest ``M`` levels of ``potential``.

    The half-width is the outer classical turning point of level ``M`` plus
    twelve Airy decay lengths (comfortably beyond six turning-point widths), and
    the spacing resolves the shortest local de Broglie wavelength.  The point
    count is odd so the grid can be Richardson-coarsened.
    """
    if isinstance(potential, Tabulated):
        raise InvalidInputError("tabulated potentials carry their own grid")
    m = potential.m
    if isinstance(potential, Harmonic):
        e_top = hbar * potential.omega * (M - 0.5)
    else:
        # Coarse pre-solve on a generous box to estimate level M.
        e_guess = potential.minimum() + hbar * (M + 1) * 2.0
        half = 2.0 * _outer_turning_point(potential, e_guess) + 4.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            pre = solve_spectrum(
                build_hamiltonian(Grid1D(-half, half, 1601), potential, hbar),
                M)
        e_top = float(pre.energies[-1])
    x_t = _outer_turning_point(potential, e_top)
    slope = abs(float(potential(x_t + 1e-6) - potential(x_t - 1e-6))) / 2e-6
    airy = (hbar ** 2 / (2.0 * m * max(slope, 1e-12))) ** (1.0 / 3.0)
    half = x_t + 12.0 * airy
    k_max = math.sqrt(2.0 * m * max(e_top - potential.minimum(), 1e-12)) / hbar
    h = 2.0 * math.pi / k_max / points_per_wavelength
    n = int(math.ceil(2.0 * half / h)) + 1
    n = min(max(n, 201), max_points)
    if n % 2 == 0:
        n += 1
    return Grid1D(-half, half, n)


def reformation_time(spectrum: Spectrum, i: int, j: int,
                     tol: float = 1e-12) -> float:
    """Beat period ``2 pi hbar / |E_i - E_j|`` of two 1-based levels."""
    if i == j:
        raise InvalidInputError("reformation time needs two distinct levels")
    e_i, _ = spectrum.level(i)
    e_j, _ = spectrum.level(j)
    gap = abs(e_i - e_j)
    if gap <= tol * max(abs(e_i), abs(e_j), 1.0):
        raise DegeneracyError(
            f"levels {i} and {j} are degenerate (|dE| = {gap:.3e})")
    return 2.0 * math.pi * spectrum.hbar / gap


def harmonic_oracle(m: float, omega: float, hbar: float, M: int) -> np.ndarray:
    """Exact levels ``hbar omega (k - 1/2)``, ``k = 1..M``."""
    if not (m > 0 and omega > 0 and hbar > 0):
        raise InvalidInputError("harmonic oracle needs m, omega, hbar > 0")
    return hbar * omega * (np.arange(1, M + 1) - 0.5)


def harmonic_spectrum(m: float = 1.0, omega: float = 1.0, hbar: float = 1.0,
                      M: int = 32, grid: Grid1D | None = None,
                      richardson: bool = True, rtol: float = 1e-6) -> Spectrum:
    """Numerical oscillator spectrum, checked level by level against the oracle."""
    spectrum = compute_spectrum(Harmonic(m, omega), M, hbar, grid, richardson)
    exact = harmonic_oracle(m, omega, hbar, M)
    err = np.max(np.abs(spectrum.energies - exact) / exact)
    if err > rtol:
        warnings.warn(f"oscillator spectrum deviates from the analytic levels "
                      f"by {err:.2e} (relative)", RuntimeWarning, stacklevel=2)
    return spectrum

"""Two bilinearly coupled oscillators with position measurements on the first.

The state lives on the truncated product basis ``|n1, n2>`` of the two
uncoupled oscillators, flattened as ``n1 * N2 + n2``.  The x1 kernel is
built by quadrature of Hermite functions on a mode-1 grid; x2 moments use
exact ladder-operator matrices.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AnnihilatedStateError, InvalidInputError
from .sequence import (OutcomeDensity, effective_uncertainty, most_probable,
                       sample_result)

LEAK_WARN = 1e-3


@dataclass(frozen=True)
class CoupledConfig:
    m1: float = 1.0
    m2: float = 1.0
    omega1: float = 1.0
    omega2: float = 1.0
    gamma: float = 0.0
    da1: float = 0.5
    hbar: float = 1.0
    n1: int = 24
    n2: int = 24

    def __post_init__(self):
        for name in ("m1", "m2", "omega1", "omega2", "da1", "hbar"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(
                    f"coupled.{name} must be > 0, got {getattr(self, name)}")
        for name in ("n1", "n2"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidInputError(f"coupled.{name} must be a positive integer")
        bound = self.m1 * self.m2 * self.omega1 ** 2 * self.omega2 ** 2
        if not self.gamma ** 2 < bound:
            raise InvalidInputError(
                f"coupled.gamma: need gamma^2 < m1 m2 omega1^2 omega2^2 = {bound}")

    def swapped(self) -> "CoupledConfig":
        return CoupledConfig(self.m2, self.m1, self.omega2, self.omega1,
                             self.gamma, self.da1, self.hbar, self.n2, self.n1)

    @property
    def dim(self) -> int:
        return self.n1 * self.n2


@dataclass
class CoupledState:
    amplitudes: np.ndarray
    config: CoupledConfig
    leak: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.amplitudes, dtype=complex).ravel()
        if c.size != self.config.dim:
            raise InvalidInputError(
                f"state has {c.size} amplitudes, basis has {self.config.dim}")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("coupled state must be finite")
        self.amplitudes = c

    def matrix(self) -> np.ndarray:
        return self.amplitudes.reshape(self.config.n1, self.config.n2)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "CoupledState":
        n = self.norm()
        if n == 0:
            raise AnnihilatedStateError("coupled state has zero norm")
        return CoupledState(self.amplitudes / n, self.config, self.leak)


def position_matrix(n: int, m: float, omega: float, hbar: float) -> np.ndarray:
    """Truncated ``x = sqrt(hbar/2m omega) (a + a^dagger)``."""
    off = np.sqrt(np.arange(1, n))
    return math.sqrt(hbar / (2 * m * omega)) * (np.diag(off, 1) + np.diag(off, -1))


def position_squared_matrix(n: int, m: float, omega: float, hbar: float) -> np.ndarray:
    """Exact ``<j|x^2|k>`` (not the square of the truncated ``x``)."""
    k = np.arange(n)
    off = np.sqrt((k[:-2] + 1) * (k[:-2] + 2))
    out = np.diag(2 * k + 1.0) + np.diag(off, 2) + np.diag(off, -2)
    return hbar / (2 * m * omega) * out


def coupled_hamiltonian(config: CoupledConfig) -> np.ndarray:
    c = config
    h1 = np.diag(c.hbar * c.omega1 * (np.arange(c.n1) + 0.5))
    h2 = np.diag(c.hbar * c.omega2 * (np.arange(c.n2) + 0.5))
    x1 = position_matrix(c.n1, c.m1, c.omega1, c.hbar)
    x2 = position_matrix(c.n2, c.m2, c.omega2, c.hbar)
    H = (np.kron(h1, np.eye(c.n2)) + np.kron(np.eye(c.n1), h2)
         + c.gamma * np.kron(x1, x2))
    return 0.5 * (H + H.T)


def hermite_functions(n: int, x: np.ndarray, m: float, omega: float,
                      hbar: float) -> np.ndarray:
    """Oscillator eigenfunctions ``psi_0..psi_{n-1}`` on ``x``, shape ``(len(x), n)``."""
    scale = math.sqrt(m * omega / hbar)
    xi = scale * np.asarray(x, dtype=float)
    out = np.zeros((xi.size, n))
    out[:, 0] = (scale ** 2 / math.pi) ** 0.25 * np.exp(-0.5 * xi ** 2)
    if n > 1:
        out[:, 1] = math.sqrt(2.0) * xi * out[:, 0]
    for k in range(1, n - 1):
        out[:, k + 1] = (math.sqrt(2.0 / (k + 1)) * xi * out[:, k]
                         - math.sqrt(k / (k + 1)) * out[:, k - 1])
    return out


def _mode_grid(n, m, omega, hbar, points=2001):
    ell = math.sqrt(hbar / (m * omega))
    half = (math.sqrt(2 * n + 1) + 10.0) * ell
    x = np.linspace(-half, half, points)
    tw = np.full(points, x[1] - x[0])
    tw[0] = tw[-1] = 0.5 * tw[0]
    return x, tw


class _Mode1:
    """Cached mode-1 quadrature data for one configuration."""

    def __init__(self, config: CoupledConfig):
        self.x, self.tw = _mode_grid(config.n1, config.m1, config.omega1,
                                     config.hbar)
        self.h = hermite_functions(config.n1, self.x, config.m1,
                                   config.omega1, config.hbar)

    def kernel(self, a: float, da: float) -> np.ndarray:
        w = self.tw * np.exp(-0.5 * ((self.x - a) / da) ** 2)
        K = self.h.T @ (w[:, None] * self.h)
        return 0.5 * (K + K.T)


_MODE1_CACHE: dict = {}


def _mode1(config: CoupledConfig) -> _Mode1:
    key = (config.n1, config.m1, config.omega1, config.hbar)
    if key not in _MODE1_CACHE:
        _MODE1_CACHE[key] = _Mode1(config)
    return _MODE1_CACHE[key]


def measure_x1(state: CoupledState, a1: float, da1: float | None = None,
               warn: bool = True) -> CoupledState:
    """Apply ``exp(-(x1 - a1)^2 / (2 da1^2))`` to mode 1; unnormalized result.

    The returned state's ``leak`` is the fraction of the filtered norm lost
    to mode-1 truncation; above 1e-3 a warning is emitted.
    """
    cfg = state.config
    da1 = cfg.da1 if da1 is None else da1
    if not da1 > 0:
        raise InvalidInputError("da1 must be > 0")
    mode = _mode1(cfg)
    C = state.matrix()
    out = mode.kernel(a1, da1) @ C
    filtered = np.exp(-0.5 * ((mode.x - a1) / da1) ** 2)[:, None] * (mode.h @ C)
    grid_norm2 = float(np.sum(mode.tw[:, None] * np.abs(filtered) ** 2))
    kept = float(np.sum(np.abs(out) ** 2))
    leak = 0.0 if grid_norm2 == 0 else max(0.0, 1.0 - kept / grid_norm2)
    if warn and leak > LEAK_WARN:
        warnings.warn(f"x1 measurement leaked {leak:.2e} of the norm out of "
                      f"the {cfg.n1}-level mode-1 basis", RuntimeWarning,
                      stacklevel=2)
    return CoupledState(out.ravel(), cfg, leak)


def x2_moments(state: CoupledState) -> tuple[float, float]:
    """Mean and variance of ``x2`` in a normalized state."""
    cfg = state.config
    C = state.matrix()
    x2 = position_matrix(cfg.n2, cfg.m2, cfg.omega2, cfg.hbar)
    x2sq = position_squared_matrix(cfg.n2, cfg.m2, cfg.omega2, cfg.hbar)
    norm2 = float(np.sum(np.abs(C) ** 2))
    mean = float(np.real(np.sum(np.conj(C) * (C @ x2)))) / norm2
    second = float(np.real(np.sum(np.conj(C) * (C @ x2sq)))) / norm2
    return mean, second - mean ** 2


def x1_moments(state: CoupledState) -> tuple[float, float]:
    swapped = CoupledState(state.matrix().T.ravel(), state.config.swapped())
    return x2_moments(swapped)


def indirect_uncertainty(state: CoupledState, method: str = "variance",
                         da: float | None = None) -> float:
    """Spread of ``x2`` induced by the measurements on ``x1``.

    ``method="variance"`` returns ``sqrt(2 Var(x2))``.  ``method="outcome"``
    (experimental, no conformance contract) runs the outcome-density
    machinery for a hypothetical Gaussian ``x2`` measurement of width ``da``
    (default ``da1``).
    """
    if method == "variance":
        return math.sqrt(2.0 * max(x2_moments(state)[1], 0.0))
    if method != "outcome":
        raise InvalidInputError(f"unknown indirect-uncertainty method {method!r}")
    cfg = state.config
    da = cfg.da1 if da is None else da
    x, tw = _mode_grid(cfg.n2, cfg.m2, cfg.omega2, cfg.hbar)
    h = hermite_functions(cfg.n2, x, cfg.m2, cfg.omega2, cfg.hbar)
    rho = np.sum(np.abs(h @ state.matrix().T) ** 2, axis=1)
    mean, var = x2_moments(state)
    half = 6.0 * max(da, math.sqrt(max(var, 0.0)))
    a = mean + np.linspace(-half, half, 801)
    weights = np.exp(-((x[None, :] - a[:, None]) / da) ** 2) @ (tw * rho)
    density = OutcomeDensity(a, weights)
    return effective_uncertainty(density, most_probable(density))


@dataclass
class NormalModes:
    frequencies: np.ndarray
    vectors: np.ndarray


def normal_modes(config: CoupledConfig) -> NormalModes:
    """Classical normal modes of the coupled quadratic form (ascending)."""
    c = config
    minv = np.diag([1 / math.sqrt(c.m1), 1 / math.sqrt(c.m2)])
    K = np.array([[c.m1 * c.omega1 ** 2, c.gamma], [c.gamma, c.m2 * c.omega2 ** 2]])
    w2, U = np.linalg.eigh(minv @ K @ minv)
    return NormalModes(np.sqrt(w2), U)


def equal_mass_frequencies(m: float, omega1: float, omega2: float,
                           gamma: float) -> tuple[float, float]:
    """``(omega_-, omega_+)`` for equal masses in closed form."""
    mean = 0.5 * (omega1 ** 2 + omega2 ** 2)
    root = math.sqrt((0.5 * (omega1 ** 2 - omega2 ** 2)) ** 2 + (gamma / m) ** 2)
    return math.sqrt(mean - root), math.sqrt(mean + root)


def ground_state_covariance(config: CoupledConfig) -> np.ndarray:
    """Exact position covariance of the coupled Gaussian ground state."""
    nm = normal_modes(config)
    minv = np.diag([1 / math.sqrt(config.m1), 1 / math.sqrt(config.m2)])
    inner = nm.vectors @ np.diag(1 / nm.frequencies) @ nm.vectors.T
    return 0.5 * config.hbar * minv @ inner @ minv


def coupled_ground_state(config: CoupledConfig) -> CoupledState:
    w, v = np.linalg.eigh(coupled_hamiltonian(config))
    g = v[:, 0]
    if g[np.argmax(np.abs(g))] < 0:
        g = -g
    return CoupledState(g, config)


@dataclass
class CoupledTrace:
    config: CoupledConfig
    dT: float
    results: list[float] = field(default_factory=list)
    spreads: list[float] = field(default_factory=list)
    leaks: list[float] = field(default_factory=list)
    final_state: CoupledState | None = None


def _x1_density(state: CoupledState, da1: float, points: int = 801) -> OutcomeDensity:
    cfg = state.config
    mode = _mode1(cfg)
    mean, var = x1_moments(state)
    half = 6.0 * max(da1, math.sqrt(max(var, 0.0)))
    a = mean + np.linspace(-half, half, points)
    C = state.matrix()
    weights = np.array([np.sum(np.abs(mode.kernel(ai, da1) @ C) ** 2)
                        for ai in a])
    return OutcomeDensity(a, weights)


def coupled_sequence(config: CoupledConfig, N: int, dT: float,
                     policy: str = "most_probable", seed: int | None = None,
                     results=None, initial: CoupledState | None = None
                     ) -> CoupledTrace:
    """Measure ``x1`` ``N`` times, ``dT`` apart, tracking the ``x2`` spread.

    ``spreads[0]`` is the initial value (coupled ground state unless
    ``initial`` is given); ``spreads[k]`` follows the ``k``-th renormalized
    measurement.
    """
    if int(N) != N or N < 0:
        raise InvalidInputError("N must be a non-negative integer")
    if not dT >= 0:
        raise InvalidInputError("dT must be >= 0")
    if policy not in ("most_probable", "sampled", "fixed"):
        raise InvalidInputError(f"unknown policy {policy!r}")
    if policy == "fixed" and (results is None or len(results) != N):
        raise InvalidInputError(f"fixed policy needs {N} results")
    rng = np.random.default_rng(seed) if policy == "sampled" else None
    w, v = np.linalg.eigh(coupled_hamiltonian(config))
    state = coupled_ground_state(config) if initial is None else initial.normalized()
    trace = CoupledTrace(config, dT)
    trace.spreads.append(indirect_uncertainty(state))
    trace.leaks.append(0.0)
    phases = np.exp(-1j * w * dT / config.hbar)
    for k in range(N):
        if k:
            state = CoupledState(v @ (phases * (v.T @ state.amplitudes)), config)
        if policy == "fixed":
            a = float(results[k])
        else:
            density = _x1_density(state, config.da1)
            a = most_probable(density) if policy == "most_probable" \
                else sample_result(density, rng)
        measured = measure_x1(state, a, warn=False)
        state = measured.normalized()
        trace.results.append(a)
        trace.spreads.append(indirect_uncertainty(state))
        trace.leaks.append(measured.leak)
    trace.final_state = state
    worst = max(trace.leaks)
    if worst > LEAK_WARN:
        warnings.warn(f"x1 measurements leaked up to {worst:.2e} of the norm "
                      f"out of the {config.n1}-level mode-1 basis",
                      RuntimeWarning, stacklevel=2)
    return trace

"""Packaged scenarios: oscillator QND scan, double-well scan, Leggett-Garg runs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .measurement import (GaussianKernel, MeasurementKernel,
                          StateCoefficients, kernel_matrices)
from .sequence import (MODES, SequenceConfig, UncertaintyCurve,
                       ground_sigma, position_moments,
                       uncertainty_curve)
from .spectral import (DoubleWell, Spectrum, compute_spectrum,
                       harmonic_oracle, harmonic_spectrum, reformation_time)


def commutator_amplitude(m: float, omega: float, hbar: float, dT: float) -> float:
    """``[x(t + dT), x(t)] / i`` for an oscillator: ``hbar sin(omega dT) / (m omega)``."""
    if not (m > 0 and omega > 0):
        raise InvalidInputError("commutator needs m, omega > 0")
    return hbar / (m * omega) * math.sin(omega * dT)


def default_dT_grid(period: float, points: int, span: float = 1.0) -> np.ndarray:
    """``points`` equally spaced times in ``(0, span * period]``."""
    return span * period * np.arange(1, points + 1) / points


def qnd_harmonic_scan(m: float = 1.0, omega: float = 1.0, hbar: float = 1.0,
                      kernel: MeasurementKernel | None = None, N: int = 8,
                      dT_grid=None, policy: str = "most_probable",
                      mode: str = "linear", M: int = 32,
                      seed: int | None = None, threads: int = 1,
                      spectrum: Spectrum | None = None) -> UncertaintyCurve:
    """Effective uncertainty versus quiescent time for an oscillator.

    Starts from the ground state.  The default kernel is a Gaussian whose
    width equals the ground-state spread and the default scan is 64 points
    over one period.
    """
    if spectrum is None:
        spectrum = harmonic_spectrum(m, omega, hbar, M)
    if kernel is None:
        kernel = GaussianKernel(ground_sigma(m, omega, hbar))
    if dT_grid is None:
        dT_grid = default_dT_grid(2 * math.pi / omega, 64)
    exact = harmonic_oracle(m, omega, hbar, spectrum.size)
    cfg = SequenceConfig(kernel, float(dT_grid[0]), N, mode, policy, seed)
    curve = uncertainty_curve(spectrum, StateCoefficients.basis(spectrum.size),
                              cfg, dT_grid, threads)
    curve.meta.update({
        "experiment": "qnd-harmonic",
        "potential": {"kind": "harmonic", "m": m, "omega": omega},
        "hbar": hbar, "M": spectrum.size, "N": N, "policy": policy,
        "mode": mode, "seed": seed, "kernel": kernel.parameters(),
        "period": 2 * math.pi / omega,
        "spectrum_max_rel_error": float(
            np.max(np.abs(spectrum.energies - exact) / exact)),
    })
    return curve


def squid_initial_state(spectrum: Spectrum) -> StateCoefficients:
    """``(phi_1 - phi_2)/sqrt(2)`` with the sign that puts it in the left well."""
    c = np.zeros(spectrum.size, dtype=complex)
    c[0], c[1] = 1.0, -1.0
    if position_moments(spectrum, c)[0] > 0:
        c[1] = 1.0
    return StateCoefficients(c / math.sqrt(2.0), normalized=True)


def well_sigma(potential: DoubleWell, hbar: float) -> float:
    """Ground-state spread of the harmonic approximation to one well."""
    omega_w = math.sqrt(2.0 * potential.mu / potential.m)
    return ground_sigma(potential.m, omega_w, hbar)


@dataclass
class SquidScan:
    curve: UncertaintyCurve
    T12: float
    spectrum: Spectrum


def squid_scan(mu: float = 1.0, lam: float = 1.0, m: float = 1.0,
               hbar: float = 1.0, kernel: MeasurementKernel | None = None,
               N: int = 8, dT_grid=None, policy: str = "most_probable",
               mode: str = "linear", M: int = 16, seed: int | None = None,
               threads: int = 1, spectrum: Spectrum | None = None
               ) -> SquidScan:
    """Effective uncertainty versus quiescent time in the bistable flux potential.

    Starts from the left-well doublet combination.  Defaults: Gaussian kernel
    as wide as the single-well ground state, 96 points over
    ``(0, 2.5 T_12]``.
    """
    potential = DoubleWell(mu, lam, m)
    if spectrum is None:
        spectrum = compute_spectrum(potential, M, hbar, richardson=True)
    T12 = reformation_time(spectrum, 1, 2)
    if kernel is None:
        kernel = GaussianKernel(well_sigma(potential, hbar))
    if dT_grid is None:
        dT_grid = default_dT_grid(T12, 96, span=2.5)
    cfg = SequenceConfig(kernel, float(dT_grid[0]), N, mode, policy, seed)
    curve = uncertainty_curve(spectrum, squid_initial_state(spectrum), cfg,
                              dT_grid, threads)
    e = spectrum.energies
    curve.meta.update({
        "experiment": "squid-scan",
        "potential": potential.parameters(), "hbar": hbar,
        "M": spectrum.size, "N": N, "policy": policy, "mode": mode,
        "seed": seed, "kernel": kernel.parameters(), "T12": T12,
        "E1": float(e[0]), "E2": float(e[1]),
        "barrier_height": potential.barrier_height,
        "doublet_ratio": float((e[1] - e[0]) / (e[2] - e[1]))
        if spectrum.size > 2 else None,
    })
    return SquidScan(curve, T12, spectrum)


@dataclass(frozen=True)
class LeggettGargConfig:
    """Three measurements at ``t_1``, ``t_1 + tau12``, ``t_1 + tau12 + tau23``.

    ``measurement="kernel"`` measures with ``kernel`` and dichotomizes the
    result by its sign; ``"projective"`` is the two-level limit: projectors
    onto the eigenvectors of ``sign(x)`` restricted to the lowest doublet.
    ``protocol="standard"`` estimates ``C_13`` from separate runs that skip
    the middle measurement; ``"sequential"`` takes it from the same record.
    """

    potential: DoubleWell
    tau12: float
    tau23: float
    kernel: MeasurementKernel
    trials: int = 10000
    seed: int | None = None
    mode: str = "linear"
    measurement: str = "kernel"
    protocol: str = "standard"
    a_points: int = 400

    def __post_init__(self):
        if not (self.tau12 > 0 and self.tau23 > 0):
            raise InvalidInputError("tau12 and tau23 must be > 0")
        if int(self.trials) != self.trials or self.trials < 1:
            raise InvalidInputError("trials must be an integer >= 1")
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown probability mode {self.mode!r}")
        if self.measurement not in ("kernel", "projective"):
            raise InvalidInputError(
                f"measurement must be 'kernel' or 'projective', got {self.measurement!r}")
        if self.protocol not in ("standard", "sequential"):
            raise InvalidInputError(
                f"protocol must be 'standard' or 'sequential', got {self.protocol!r}")


@dataclass
class LeggettGargResult:
    C12: float
    C23: float
    C13: float
    K: float
    se12: float
    se23: float
    se13: float
    se_K: float
    violation: bool
    zero_results: int
    q: np.ndarray = field(repr=False)
    q13: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("C12", "C23", "C13", "K", "se12", "se23", "se13", "se_K",
                 "violation", "zero_results")}


class _KernelMeter:
    """Batched kernel measurement on a fixed result grid."""

    def __init__(self, spectrum, kernel, mode, a_grid):
        self.a_grid = a_grid
        self.W = kernel_matrices(spectrum, kernel, a_grid)
        self.p = MODES[mode]

    def __call__(self, C, rng, chunk=512):
        A, M, _ = self.W.shape
        Wflat = self.W.reshape(A * M, M)
        out = np.empty_like(C)
        results = np.empty(C.shape[0])
        step = self.a_grid[1] - self.a_grid[0]
        tw = np.full(A, step)
        tw[0] = tw[-1] = step / 2
        for s in range(0, C.shape[0], chunk):
            c = C[s:s + chunk]
            wc = (Wflat @ c.T).reshape(A, M, -1)
            prob = (np.sum(np.abs(wc) ** 2, axis=1) ** self.p) * tw[:, None]
            cdf = np.cumsum(prob, axis=0)
            u = rng.random(c.shape[0]) * cdf[-1]
            idx = np.minimum((cdf < u[None, :]).sum(axis=0), A - 1)
            picked = wc[idx, :, np.arange(c.shape[0])]
            picked /= np.linalg.norm(picked, axis=1, keepdims=True)
            out[s:s + chunk] = picked
            results[s:s + chunk] = self.a_grid[idx]
        return out, results


class _ProjectiveMeter:
    """Two-level projective measurement of the flux sign."""

    def __init__(self, spectrum):
        tw = spectrum.grid.trapezoid_weights()
        phi = spectrum.states[:, :2]
        S = phi.T @ ((tw * np.sign(spectrum.x))[:, None] * phi)
        vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
        self.vecs = vecs.T.astype(complex)     # row 0: left (negative), row 1: right
        self.signs = np.array([-1.0, 1.0])

    def __call__(self, C, rng):
        amp = C @ self.vecs.conj().T
        p_right = np.abs(amp[:, 1]) ** 2 / np.sum(np.abs(amp) ** 2, axis=1)
        right = rng.random(C.shape[0]) < p_right
        return self.vecs[right.astype(int)], self.signs[right.astype(int)]


def _corr(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    prod = a * b
    c = float(prod.mean())
    se = float(prod.std(ddof=1) / math.sqrt(prod.size)) if prod.size > 1 else math.inf
    return c, se


def leggett_garg_run(config: LeggettGargConfig,
                     spectrum: Spectrum) -> LeggettGargResult:
    """Monte Carlo estimate of ``K = C_12 + C_23 - C_13`` with ``q = sign(a)``.

    Every trial starts from the left-well doublet state.  Results exactly at
    ``a = 0`` are assigned ``q = +1`` and counted in ``zero_results``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=0 if config.seed is None else config.seed))
    c0 = squid_initial_state(spectrum).amplitudes
    if config.measurement == "projective":
        spectrum = spectrum.truncated(2)
        c0 = c0[:2] / np.linalg.norm(c0[:2])
        meter = _ProjectiveMeter(spectrum)
    else:
        pot = config.potential
        half = pot.well_position + 6.0 * max(config.kernel.da,
                                             well_sigma(pot, spectrum.hbar))
        meter = _KernelMeter(spectrum, config.kernel, config.mode,
                             np.linspace(-half, half, config.a_points))
    u12 = np.exp(-1j * spectrum.energies * config.tau12 / spectrum.hbar)
    u23 = np.exp(-1j * spectrum.energies * config.tau23 / spectrum.hbar)
    T = int(config.trials)

    C = np.tile(c0, (T, 1))
    C, a1 = meter(C, rng)
    C, a2 = meter(C * u12, rng)
    C, a3 = meter(C * u23, rng)
    results = [a1, a2, a3]
    if config.protocol == "standard":
        S = np.tile(c0, (T, 1))
        S, b1 = meter(S, rng)
        S, b3 = meter(S * u12 * u23, rng)
        results += [b1, b3]
    zeros = sum(int(np.count_nonzero(r == 0)) for r in results)
    q = np.stack([np.where(r >= 0, 1, -1) for r in results[:3]], axis=1)
    q13 = (np.stack([np.where(r >= 0, 1, -1) for r in results[3:]], axis=1)
           if config.protocol == "standard" else q[:, [0, 2]])

    c12, se12 = _corr(q[:, 0], q[:, 1])
    c23, se23 = _corr(q[:, 1], q[:, 2])
    c13, se13 = _corr(q13[:, 0], q13[:, 1])
    K = c12 + c23 - c13
    if config.protocol == "standard":
        s = q[:, 0] * q[:, 1] + q[:, 1] * q[:, 2]
        se_K = math.sqrt(s.var(ddof=1) / T + se13 ** 2) if T > 1 else math.inf
    else:
        s = q[:, 0] * q[:, 1] + q[:, 1] * q[:, 2] - q[:, 0] * q[:, 2]
        se_K = float(s.std(ddof=1) / math.sqrt(T)) if T > 1 else math.inf
    return LeggettGargResult(c12, c23, c13, K, se12, se23, se13, se_K,
                             bool(K > 1.0 + 2.0 * se_K), zeros, q, q13)


def two_level_lg_oracle(omega12: float, tau: float) -> float:
    """Ideal two-level value ``2 cos(w tau) - cos(2 w tau)`` for equal spacings."""
    return 2.0 * math.cos(omega12 * tau) - math.cos(2.0 * omega12 * tau)

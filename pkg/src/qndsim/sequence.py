"""Sequences of impulsive measurements separated by free evolution.

The state is carried as eigenbasis amplitudes.  A record ``a_0, ..., a_N``
is built by alternating

    measure a_0, evolve dT, measure a_1, ..., evolve dT, measure a_N

and before every measurement the outcome density over a grid of candidate
results is evaluated, from which the most probable result and the
effective uncertainty

    da_eff^2 = 2 * int (a - a_tilde)^2 P(a) da / int P(a) da

are reported.  ``P(a)`` is ``||W(a) c||^2`` in *linear* mode or its square in
*literal* mode; both are kept because they disagree on the classical limit
(linear gives ``da_eff -> da``, literal gives ``da / sqrt(2)``).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (AnnihilatedStateError, DegenerateDensityError,
                     DegenerateRunError, InvalidInputError, QNDError)
from .measurement import (MeasurementKernel,
                          StateCoefficients, renormalize)
from .spectral import Spectrum

MODES = {"linear": 1, "literal": 2}
POLICIES = ("most_probable", "sampled", "fixed")
TIE_RTOL = 1e-12
AMBIGUITY_RTOL = 0.01


@dataclass(frozen=True)
class MeasurementRecord:
    results: tuple[float, ...]
    quiescent_time: float
    kernel: MeasurementKernel

    def __post_init__(self):
        if len(self.results) > 1 and not self.quiescent_time > 0:
            raise InvalidInputError("quiescent time must be > 0")
        if len(self.results) < 1:
            raise InvalidInputError("a record holds at least one result")

    @property
    def times(self) -> np.ndarray:
        return self.quiescent_time * np.arange(len(self.results))


@dataclass(frozen=True)
class OutcomeDensity:
    """Unnormalized probability weights of the next result on a uniform grid."""

    a_grid: np.ndarray
    weights: np.ndarray
    mode: str = "linear"

    def __post_init__(self):
        a = np.asarray(self.a_grid, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if a.ndim != 1 or a.size < 3 or w.shape != a.shape:
            raise InvalidInputError(
                "outcome density needs matching 1-D arrays of >= 3 points")
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown probability mode {self.mode!r}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidInputError("outcome weights must be finite and >= 0")
        if not w.sum() > 0:
            raise DegenerateDensityError(
                "all candidate results have zero probability")
        object.__setattr__(self, "a_grid", a)
        object.__setattr__(self, "weights", w)

    @property
    def step(self) -> float:
        return float(self.a_grid[1] - self.a_grid[0])

    def trapezoid(self) -> np.ndarray:
        tw = np.full(self.a_grid.size, self.step)
        tw[0] = tw[-1] = 0.5 * self.step
        return tw * self.weights

    def normalized(self) -> np.ndarray:
        """Probability density values (integrate to 1 by trapezoid)."""
        return self.weights / self.trapezoid().sum()


@dataclass(frozen=True)
class SequenceConfig:
    """Settings for :func:`run_sequence`.

    ``a_grid=None`` picks a grid per measurement, centred on the current
    ``<x>`` with half-width ``6 * max(da, spread)`` and ``a_points`` points.
    ``results`` is used by the ``fixed`` policy and must hold ``N + 1``
    values; ``seed`` by the ``sampled`` policy.
    """

    kernel: MeasurementKernel
    dT: float
    N: int
    mode: str = "linear"
    policy: str = "most_probable"
    seed: int | None = None
    results: tuple[float, ...] | None = None
    a_grid: np.ndarray | None = None
    a_points: int = 801
    a_halfwidth: float = 6.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(
                f"mode must be one of {sorted(MODES)}, got {self.mode!r}")
        if self.policy not in POLICIES:
            raise InvalidInputError(
                f"policy must be one of {POLICIES}, got {self.policy!r}")
        if int(self.N) != self.N or self.N < 0:
            raise InvalidInputError(f"N must be a non-negative integer, got {self.N}")
        if not self.dT >= 0:
            raise InvalidInputError(f"dT must be >= 0, got {self.dT}")
        if self.policy == "fixed":
            if self.results is None or len(self.results) != self.N + 1:
                raise InvalidInputError(
                    f"fixed policy needs N + 1 = {self.N + 1} results")
        if self.a_points < 3:
            raise InvalidInputError("a_points must be >= 3")


@dataclass
class SequenceResult:
    record: MeasurementRecord | None
    results: list[float]
    da_eff: list[float]
    a_tilde: list[float]
    ambiguous: list[bool]
    leaks: list[float]
    final_state: StateCoefficients | None
    log_likelihood: float
    mode: str

    @property
    def leak(self) -> float:
        return max(self.leaks) if self.leaks else 0.0


@dataclass
class CurvePoint:
    dT: float
    da_eff: float
    a_tilde: float
    leak: float
    ambiguous: bool = False
    error: str | None = None


@dataclass
class UncertaintyCurve:
    points: list[CurvePoint]
    mode: str = "linear"
    meta: dict = field(default_factory=dict)

    @property
    def dT(self) -> np.ndarray:
        return np.array([p.dT for p in self.points])

    @property
    def da_eff(self) -> np.ndarray:
        return np.array([p.da_eff for p in self.points])

    @property
    def a_tilde(self) -> np.ndarray:
        return np.array([p.a_tilde for p in self.points])

    def argmin(self, rtol: float = 1e-9) -> int:
        """Index of the global minimum; near-ties go to the shortest dT."""
        v = self.da_eff
        best = np.nanmin(v)
        return int(np.flatnonzero(v <= best * (1.0 + rtol) + 1e-300)[0])

    def local_minima(self) -> np.ndarray:
        """Indices of interior strict-or-flat local minima, deepest first."""
        v = self.da_eff
        idx = [i for i in range(1, v.size - 1)
               if v[i] <= v[i - 1] and v[i] <= v[i + 1]
               and (v[i] < v[i - 1] or v[i] < v[i + 1])]
        return np.array(sorted(idx, key=lambda i: v[i]), dtype=int)


def free_propagator(spectrum: Spectrum, dT: float) -> np.ndarray:
    """Diagonal of ``exp(-i H dT / hbar)`` in the eigenbasis."""
    if not dT >= 0:
        raise InvalidInputError(f"dT must be >= 0, got {dT}")
    return np.exp(-1j * spectrum.energies * (dT / spectrum.hbar))


def _amplitudes(c) -> np.ndarray:
    return c.amplitudes if isinstance(c, StateCoefficients) else np.asarray(c, dtype=complex)


def measure(spectrum: Spectrum, c, a: float,
            kernel: MeasurementKernel) -> tuple[np.ndarray, float]:
    """``W(a) c`` evaluated through the grid, plus the truncation leak.

    The leak is the fraction of the filtered grid wavefunction's norm that
    falls outside the truncated basis.
    """
    tw = spectrum.grid.trapezoid_weights()
    filtered = kernel.weights(spectrum.x, a) * spectrum.synthesize(_amplitudes(c))
    out = spectrum.states.T @ (tw * filtered)
    grid_norm2 = float(np.sum(tw * np.abs(filtered) ** 2))
    leak = 0.0 if grid_norm2 == 0 else max(
        0.0, 1.0 - float(np.sum(np.abs(out) ** 2)) / grid_norm2)
    return out, leak


def step(c, a: float, spectrum: Spectrum, kernel: MeasurementKernel,
         dT: float) -> StateCoefficients:
    """Evolve for ``dT`` then measure ``a``: ``c' = W(a) U(dT) c``, unnormalized."""
    amps = _amplitudes(c)
    if not np.all(np.isfinite(amps)):
        raise InvalidInputError("state coefficients must be finite")
    out, _ = measure(spectrum, free_propagator(spectrum, dT) * amps, a, kernel)
    if not np.any(out):
        raise AnnihilatedStateError("measurement annihilated the state")
    return StateCoefficients(out)


def conditional_density(c, a_grid, spectrum: Spectrum,
                        kernel: MeasurementKernel, mode: str = "linear",
                        chunk: int = 256) -> OutcomeDensity:
    """Weights ``(||W(a) c||^2)^p`` for every candidate result ``a``."""
    if mode not in MODES:
        raise InvalidInputError(f"unknown probability mode {mode!r}")
    amps = _amplitudes(c)
    if not np.all(np.isfinite(amps)) or not np.any(amps):
        raise InvalidInputError("state must be finite and nonzero")
    a_grid = np.asarray(a_grid, dtype=float)
    psi_w = spectrum.grid.trapezoid_weights() * spectrum.synthesize(amps)
    x = spectrum.x
    norms = np.empty(a_grid.size)
    for s in range(0, a_grid.size, chunk):
        w = kernel.weights(x, a_grid[s:s + chunk])
        proj = (w * psi_w) @ spectrum.states
        norms[s:s + chunk] = np.sum(np.abs(proj) ** 2, axis=1)
    return OutcomeDensity(a_grid, norms ** MODES[mode], mode)


def most_probable(density: OutcomeDensity) -> float:
    """Grid argmax; ties go to the smallest ``|a|``, then the smaller ``a``."""
    w = density.weights
    cand = np.flatnonzero(w >= w.max() * (1.0 - TIE_RTOL))
    a = density.a_grid[cand]
    order = np.lexsort((a, np.abs(a)))
    return float(a[order[0]])


def peaks_ambiguous(density: OutcomeDensity, rtol: float = AMBIGUITY_RTOL) -> bool:
    """True when a second local maximum comes within ``rtol`` of the highest."""
    w = density.weights
    interior = (w[1:-1] >= w[:-2]) & (w[1:-1] >= w[2:]) & \
        ((w[1:-1] > w[:-2]) | (w[1:-1] > w[2:]))
    peaks = np.sort(w[1:-1][interior])[::-1]
    return peaks.size >= 2 and peaks[1] >= (1.0 - rtol) * peaks[0]


def effective_uncertainty(density: OutcomeDensity, a_tilde: float) -> float:
    p = density.trapezoid()
    return math.sqrt(2.0 * float(np.sum((density.a_grid - a_tilde) ** 2 * p))
                     / float(p.sum()))


def sample_result(density: OutcomeDensity, rng: np.random.Generator) -> float:
    """Draw a grid point with probability proportional to its trapezoid mass."""
    cdf = np.cumsum(density.trapezoid())
    u = rng.random() * cdf[-1]
    i = int(np.searchsorted(cdf, u, side="right"))
    return float(density.a_grid[min(i, cdf.size - 1)])


def position_moments(spectrum: Spectrum, c) -> tuple[float, float]:
    """Mean and standard deviation of ``x`` in the (normalized) state."""
    tw = spectrum.grid.trapezoid_weights()
    rho = tw * np.abs(spectrum.synthesize(_amplitudes(c))) ** 2
    total = rho.sum()
    mean = float(np.sum(spectrum.x * rho) / total)
    var = float(np.sum((spectrum.x - mean) ** 2 * rho) / total)
    return mean, math.sqrt(max(var, 0.0))


def default_a_grid(spectrum: Spectrum, c, kernel: MeasurementKernel,
                   points: int = 801, halfwidth: float = 6.0) -> np.ndarray:
    mean, spread = position_moments(spectrum, c)
    half = halfwidth * max(kernel.da, spread)
    return mean + np.linspace(-half, half, points)


def run_sequence(spectrum: Spectrum, c0, config: SequenceConfig,
                 rng: np.random.Generator | None = None) -> SequenceResult:
    """Measure ``a_0``, then ``N`` times evolve ``dT`` and measure again.

    ``da_eff[k]`` and ``a_tilde[k]`` describe the density of ``a_k`` given
    ``a_0 .. a_{k-1}``.  The returned state is normalized; the accumulated
    norm losses are in ``log_likelihood``.
    """
    if config.policy == "sampled" and rng is None:
        rng = np.random.default_rng(config.seed)
    c, _ = renormalize(_amplitudes(c0))
    amps = c.amplitudes
    prop = free_propagator(spectrum, config.dT)
    res = SequenceResult(None, [], [], [], [], [], None, 0.0, config.mode)

    for k in range(config.N + 1):
        if k:
            amps = prop * amps
        try:
            grid = config.a_grid if config.a_grid is not None else \
                default_a_grid(spectrum, amps, config.kernel,
                               config.a_points, config.a_halfwidth)
            density = conditional_density(amps, grid, spectrum,
                                          config.kernel, config.mode)
            a_tilde = most_probable(density)
            res.a_tilde.append(a_tilde)
            res.da_eff.append(effective_uncertainty(density, a_tilde))
            res.ambiguous.append(peaks_ambiguous(density))
            if config.policy == "most_probable":
                a = a_tilde
            elif config.policy == "sampled":
                a = sample_result(density, rng)
            else:
                a = float(config.results[k])
            out, leak = measure(spectrum, amps, a, config.kernel)
            c, R = renormalize(out)
        except DegenerateRunError as exc:
            res.final_state = StateCoefficients(amps)
            raise type(exc)(f"step {k}: {exc}", partial=res) from exc
        amps = c.amplitudes
        res.results.append(a)
        res.leaks.append(leak)
        res.log_likelihood -= math.log(R)

    res.final_state = c
    res.record = MeasurementRecord(tuple(res.results),
                                   config.dT,
                                   config.kernel)
    return res


def point_rng(seed: int | None, index: int) -> np.random.Generator:
    """Independent stream for scan point ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=0 if seed is None else seed,
                               spawn_key=(index,)))


def uncertainty_curve(spectrum: Spectrum, c0, config: SequenceConfig,
                      dT_grid: Sequence[float], threads: int = 1
                      ) -> UncertaintyCurve:
    """Final-step ``da_eff`` and ``a_tilde`` for each quiescent time.

    Points are independent; ``threads`` only changes wall time.  A failing
    point is recorded with its error message and NaN values.
    """
    dT_grid = [float(t) for t in dT_grid]
    if not dT_grid or min(dT_grid) <= 0:
        raise InvalidInputError("dT grid must be nonempty and positive")

    def one(i_dT):
        i, dT = i_dT
        cfg = replace(config, dT=dT)
        rng = point_rng(config.seed, i) if config.policy == "sampled" else None
        try:
            r = run_sequence(spectrum, c0, cfg, rng)
        except QNDError as exc:
            return CurvePoint(dT, math.nan, math.nan, math.nan, False, str(exc))
        return CurvePoint(dT, r.da_eff[-1], r.a_tilde[-1], r.leak,
                          r.ambiguous[-1])

    items = list(enumerate(dT_grid))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(one, items))
    else:
        points = [one(it) for it in items]
    return UncertaintyCurve(points, config.mode)


def ground_sigma(m: float, omega: float, hbar: float = 1.0) -> float:
    """Position spread of the oscillator ground state, ``sqrt(hbar/(2 m omega))``."""
    return math.sqrt(hbar / (2.0 * m * omega))

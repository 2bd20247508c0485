"""Impulsive position-measurement kernels and their eigenbasis matrices.

A measurement with result ``a`` multiplies the wavefunction by a window
function ``w_a(x)``: a Gaussian of width ``da`` (the instrumental error) or a
sharp box of half-width ``da``.  The result is left unnormalized; the norm
that survives is the likelihood of ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import AnnihilatedStateError, InvalidInputError
from .spectral import Grid1D, Spectrum


@dataclass(frozen=True)
class GaussianKernel:
    """``w_a(x) = exp(-(x - a)^2 / (2 da^2))``."""

    da: float

    def __post_init__(self):
        if not self.da > 0:
            raise InvalidInputError(f"kernel da must be > 0, got {self.da}")

    def weights(self, x, a):
        """Kernel values; an array ``a`` gives one row per result."""
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        d = x - a[..., None] if a.ndim else x - a
        return np.exp(-0.5 * (d / self.da) ** 2)

    def parameters(self) -> dict:
        return {"kind": "gaussian", "da": self.da}


@dataclass(frozen=True)
class WindowKernel:
    """Sharp window: 1 for ``|x - a| <= da``, else 0."""

    da: float

    def __post_init__(self):
        if not self.da > 0:
            raise InvalidInputError(f"kernel da must be > 0, got {self.da}")

    def weights(self, x, a):
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        d = x - a[..., None] if a.ndim else x - a
        return (np.abs(d) <= self.da).astype(float)

    def parameters(self) -> dict:
        return {"kind": "window", "da": self.da}


MeasurementKernel = Union[GaussianKernel, WindowKernel]


@dataclass(frozen=True)
class StateCoefficients:
    """Eigenbasis amplitudes; ``amplitudes[k]`` belongs to level ``k + 1``."""

    amplitudes: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        c = np.array(self.amplitudes, dtype=complex).ravel()
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("state coefficients must be finite")
        if self.normalized and abs(np.linalg.norm(c) - 1.0) >= 1e-10:
            raise InvalidInputError("state flagged normalized has norm "
                                    f"{np.linalg.norm(c):.15g}")
        c.setflags(write=False)
        object.__setattr__(self, "amplitudes", c)

    def __len__(self):
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def basis(cls, M: int, k: int = 1) -> "StateCoefficients":
        """Unit vector on 1-based level ``k``."""
        c = np.zeros(M, dtype=complex)
        c[k - 1] = 1.0
        return cls(c, normalized=True)


@dataclass(frozen=True)
class KernelMatrix:
    """``W_ml(a) = <m| w_a |l>`` in a spectrum's basis."""

    a: float
    elements: np.ndarray


def _x(grid_or_x) -> np.ndarray:
    return grid_or_x.x if isinstance(grid_or_x, Grid1D) else np.asarray(grid_or_x)


def apply_kernel(psi: np.ndarray, a: float, kernel: MeasurementKernel,
                 grid) -> np.ndarray:
    """Multiply a grid wavefunction by ``w_a``; no renormalization."""
    psi = np.asarray(psi)
    if not np.all(np.isfinite(psi)):
        raise InvalidInputError("wavefunction has non-finite samples")
    return kernel.weights(_x(grid), a) * psi


def kernel_matrix(spectrum: Spectrum, kernel: MeasurementKernel,
                  a: float) -> KernelMatrix:
    w = spectrum.grid.trapezoid_weights() * kernel.weights(spectrum.x, a)
    phi = spectrum.states
    elements = phi.T @ (w[:, None] * phi)
    elements = 0.5 * (elements + elements.T)
    return KernelMatrix(float(a), elements)


def kernel_matrices(spectrum: Spectrum, kernel: MeasurementKernel,
                    a_grid: np.ndarray) -> np.ndarray:
    """Stack of kernel matrices, shape ``(len(a_grid), M, M)``."""
    phi = spectrum.states
    tw = spectrum.grid.trapezoid_weights()
    out = np.empty((len(a_grid), spectrum.size, spectrum.size))
    for i, a in enumerate(np.asarray(a_grid, dtype=float)):
        w = tw * kernel.weights(spectrum.x, a)
        out[i] = phi.T @ (w[:, None] * phi)
    return 0.5 * (out + out.transpose(0, 2, 1))


def renormalize(c: StateCoefficients | np.ndarray
                ) -> tuple[StateCoefficients, float]:
    """Scale to unit norm; also return the factor ``R = 1/||c||`` applied."""
    amps = c.amplitudes if isinstance(c, StateCoefficients) else np.asarray(c)
    norm = float(np.linalg.norm(amps))
    if norm == 0.0 or not np.isfinite(norm):
        raise AnnihilatedStateError(
            "measurement annihilated the state (zero norm)")
    R = 1.0 / norm
    return StateCoefficients(amps * R, normalized=True), R

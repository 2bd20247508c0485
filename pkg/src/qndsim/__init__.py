"""Simulation of repeated impulsive position measurements.

Submodules: ``spectral`` (finite-difference spectra), ``measurement``
(kernels), ``sequence`` (records, outcome densities, effective uncertainty),
``experiments`` (oscillator, double-well and Leggett-Garg scenarios),
``coupled`` (indirect measurement on two coupled oscillators) and ``cli``.
"""

__version__ = "0.1.0"

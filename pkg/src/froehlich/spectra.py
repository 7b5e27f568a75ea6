"""Fluorescence spectra as sums of per-mode Lorentzian lines.

Line j sits at the mode frequency f_j (THz), has half-width gamma_j (GHz) and
weight <n_j> |mu_j|^2. On a frequency grid the intensity is

    I(f) = scale * sum_j [f/f_j] * weight_j * gamma_j / (delta_j^2 + gamma_j^2)

with delta_j = (f - f_j) in GHz. The bracketed factor is optional. Without
it each line peaks at weight/gamma and has area pi * weight over detuning in
GHz.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError
from .masterq import coherence_coefficients
from .meanfield import relax_multimode
from .params import FLAT, LINEAR, ModeSpectrum, ModelParams

__all__ = ["SpectrumLine", "Spectrum", "build_lines", "sample_spectrum", "default_grid", "GHZ_PER_THZ"]

GHZ_PER_THZ = 1000.0
COVERAGE_WIDTHS = 10.0


@dataclass(frozen=True)
class SpectrumLine:
    center: float  # THz
    half_width: float  # GHz
    weight: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise DomainError("half_width must be > 0")
        if not self.weight >= 0:
            raise DomainError("weight must be >= 0")
        if not self.center > 0:
            raise DomainError("center must be > 0")

    def peak(self) -> float:
        return self.weight / self.half_width


@dataclass
class Spectrum:
    frequencies: np.ndarray  # THz
    intensities: np.ndarray
    lines: tuple

    def peak_frequency(self) -> float:
        return float(self.frequencies[int(np.argmax(self.intensities))])


def build_lines(p: ModelParams, dipoles=None, occupations: str = "flat") -> list[SpectrumLine]:
    """One line per mode at the linear-spectrum centers.

    Occupations come from the relaxed decorrelated multimode equations. With
    ``occupations="flat"`` (default) they are solved with the flat bath, which
    is the model behind the condensate statistics; ``"boltzmann"`` keeps the
    mode-resolved Boltzmann factors instead. Widths reuse the gamma formula
    with the mode's own occupation in place of <n0>.
    """
    if p.spectrum.kind != LINEAR:
        raise UsageError("build_lines needs distinct mode centers: use spectrum_kind=linear")
    centers = p.spectrum.frequencies(p.D)
    if occupations == "flat":
        q = p.with_(spectrum=ModeSpectrum(FLAT, p.omega0, p.omega0))
    elif occupations == "boltzmann":
        q = p
    else:
        raise UsageError(f"unknown occupation model {occupations!r}")
    state, _ = relax_multimode(q)
    n = state.as_array()
    mu2 = np.ones_like(n) if dipoles is None else np.abs(np.asarray(dipoles, dtype=float)) ** 2
    if mu2.shape != n.shape:
        raise UsageError(f"dipoles must have D+1 = {n.size} entries")
    widths = np.asarray(coherence_coefficients(p, n)[0])
    return [SpectrumLine(float(c), float(g), float(w)) for c, g, w in zip(centers, widths, n * mu2)]


def default_grid(lines, points_per_width: float = 8.0, max_points: int = 200_001) -> np.ndarray:
    """Uniform grid spanning every line +- 10 widths, resolving the narrowest."""
    lo = min(l.center - COVERAGE_WIDTHS * l.half_width / GHZ_PER_THZ for l in lines)
    hi = max(l.center + COVERAGE_WIDTHS * l.half_width / GHZ_PER_THZ for l in lines)
    step = min(l.half_width for l in lines) / GHZ_PER_THZ / points_per_width
    n = int(min(max_points, max(3, np.ceil((hi - lo) / step) + 1)))
    grid = np.linspace(lo, hi, n)
    # make sure each center is sampled exactly
    return np.union1d(grid, [l.center for l in lines])


def sample_spectrum(lines, grid, scale: float = 1.0, frequency_factor: bool = False) -> Spectrum:
    """Sum the Lorentzians of ``lines`` on ``grid`` (THz)."""
    lines = tuple(lines)
    if not lines:
        raise UsageError("no lines to sample")
    f = np.asarray(grid, dtype=float)
    if f.ndim != 1 or f.size < 2 or np.any(np.diff(f) <= 0):
        raise UsageError("grid must be strictly increasing with at least two points")
    for l in lines:
        reach = COVERAGE_WIDTHS * l.half_width / GHZ_PER_THZ
        if f[0] > l.center - reach or f[-1] < l.center + reach:
            raise UsageError(
                f"grid [{f[0]:.6g}, {f[-1]:.6g}] THz does not cover line at {l.center:.6g} THz +- 10 widths"
            )
    if scale < 0:
        raise DomainError("scale must be >= 0")
    out = np.zeros_like(f)
    for l in lines:
        delta = (f - l.center) * GHZ_PER_THZ
        term = l.weight * l.half_width / (delta * delta + l.half_width**2)
        if frequency_factor:
            term = term * (f / l.center)
        out += term
    return Spectrum(f, scale * out, lines)

import numpy as np
import pytest
from scipy.integrate import quad

from froehlich.errors import DomainError, UsageError
from froehlich.params import LINEAR, ModelParams, ModeSpectrum
from froehlich.spectra import (
    GHZ_PER_THZ,
    SpectrumLine,
    build_lines,
    default_grid,
    sample_spectrum,
)


def _linear(p):
    return p.with_(spectrum=ModeSpectrum(LINEAR, p.omega0, 2 * p.omega0))


def _ratio(spec):
    return spec.intensities.max() / np.median(spec.intensities)


def test_two_mode_lines():
    p = _linear(ModelParams(r=10.0, phi=6.0, chi=0.07, D=1, nbar=2.0, omega0=0.314))
    lines = build_lines(p)
    assert len(lines) == 2
    assert [l.center for l in lines] == pytest.approx([0.314, 0.628])
    with pytest.raises(UsageError):
        build_lines(p, dipoles=[1.0])
    with pytest.raises(UsageError):
        build_lines(p, occupations="fermi")


def test_flat_spectrum_rejected(bsa280):
    with pytest.raises(UsageError):
        build_lines(bsa280)


def test_lorentzian_shape():
    line = SpectrumLine(0.5, 2.0, 3.0)
    grid = default_grid([line], points_per_width=50)
    spec = sample_spectrum([line], grid)
    assert spec.intensities.max() == pytest.approx(line.peak(), rel=1e-12)
    assert spec.peak_frequency() == pytest.approx(0.5)
    half = sample_spectrum([line], [0.47, 0.5 - 2.0 / GHZ_PER_THZ, 0.5 + 2.0 / GHZ_PER_THZ, 0.53])
    assert half.intensities[1:3] == pytest.approx([line.peak() / 2] * 2, rel=1e-12)
    # area over detuning in GHz, full real line
    area, _ = quad(lambda x: 3.0 * 2.0 / (x * x + 4.0), -np.inf, np.inf)
    assert area == pytest.approx(np.pi * 3.0, rel=1e-9)
    trunc = np.trapezoid(spec.intensities, spec.frequencies * GHZ_PER_THZ)
    # the grid holds +- 10 widths, i.e. 2 w atan(10) of the total pi w
    assert trunc == pytest.approx(2 * 3.0 * np.arctan(10.0), rel=0.01)
    wide = np.linspace(0.5 - 2.0, 0.5 + 2.0, 2_000_001)
    total = np.trapezoid(sample_spectrum([line], wide).intensities, wide * GHZ_PER_THZ)
    assert total == pytest.approx(np.pi * 3.0, rel=0.01)


def test_linearity():
    a, b = SpectrumLine(0.4, 1.0, 2.0), SpectrumLine(0.41, 3.0, 5.0)
    grid = default_grid([a, b])
    both = sample_spectrum([a, b], grid, scale=2.0)
    sep = sample_spectrum([a], grid).intensities + sample_spectrum([b], grid).intensities
    assert np.allclose(both.intensities, 2.0 * sep, rtol=1e-13)


def test_grid_coverage_and_validation():
    line = SpectrumLine(0.5, 2.0, 1.0)
    with pytest.raises(UsageError):
        sample_spectrum([line], np.linspace(0.49, 0.51, 11))
    with pytest.raises(UsageError):
        sample_spectrum([line], [0.6, 0.4])
    with pytest.raises(UsageError):
        sample_spectrum([], [0.4, 0.6])
    with pytest.raises(DomainError):
        sample_spectrum([line], [0.4, 0.6], scale=-1)
    with pytest.raises(DomainError):
        SpectrumLine(0.5, 0.0, 1.0)


def test_bsa_condensed_spectrum(bsa280):
    p = _linear(bsa280.with_(r=100.0))
    lines = build_lines(p)
    assert lines[0].half_width == pytest.approx(0.31, rel=0.02)
    spec = sample_spectrum(lines, default_grid(lines))
    assert spec.peak_frequency() == pytest.approx(0.314, abs=1e-3)
    assert _ratio(spec) > 10


def test_thermal_spectrum_has_no_dominant_peak(bsa280):
    p = _linear(bsa280.with_(r=0.0))
    lines = build_lines(p, occupations="boltzmann")
    spec = sample_spectrum(lines, default_grid(lines))
    assert _ratio(spec) < 10


def test_condensate_peak_trend(bsa280):
    peaks, widths = [], []
    for r in (50.0, 100.0, 200.0):
        lines = build_lines(_linear(bsa280.with_(r=r)))
        peaks.append(lines[0].peak())
        widths.append(lines[0].half_width)
    assert np.all(np.diff(peaks) > 0)
    assert np.all(np.diff(widths) < 0)

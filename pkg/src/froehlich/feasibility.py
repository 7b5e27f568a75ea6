"""Laser power needed to sustain a given pump rate over an illuminated spot."""

from __future__ import annotations

from dataclasses import dataclass

from scipy import constants

from .errors import DomainError

__all__ = ["FeasibilityInput", "FeasibilityReport", "feasibility"]


@dataclass(frozen=True)
class FeasibilityInput:
    r_ghz: float
    f0_thz: float
    wavelength_um: float = 400.0
    sigma_cm2: float = 1e-15

    def __post_init__(self):
        for name in ("r_ghz", "f0_thz", "wavelength_um", "sigma_cm2"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


@dataclass(frozen=True)
class FeasibilityReport:
    power_per_molecule_pw: float
    spot_area_cm2: float
    molecule_count: float
    total_power_w: float

    def as_dict(self) -> dict:
        return {
            "power_per_molecule_pw": self.power_per_molecule_pw,
            "spot_area_cm2": self.spot_area_cm2,
            "molecule_count": self.molecule_count,
            "total_power_w": self.total_power_w,
        }


def feasibility(inp: FeasibilityInput) -> FeasibilityReport:
    """P_w = r h f0 per molecule; N = A / sigma molecules in A = lambda^2 / 4."""
    p_w = inp.r_ghz * 1e9 * constants.h * inp.f0_thz * 1e12  # W
    lam_cm = inp.wavelength_um * 1e-4
    area = lam_cm**2 / 4.0
    count = area / inp.sigma_cm2
    return FeasibilityReport(p_w * 1e12, area, count, p_w * count)

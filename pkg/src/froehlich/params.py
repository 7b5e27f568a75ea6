"""Physical parameters, thermal occupations and derived rate constants.

Units throughout the package: rates in GHz, frequencies in THz (ordinary
frequency f = omega / 2 pi), time in ns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy import constants

from .errors import ConfigError, DomainError, MissingParameterError, RangeError

__all__ = [
    "FLAT",
    "LINEAR",
    "ModeSpectrum",
    "ModelParams",
    "DerivedRates",
    "planck_occupation",
    "temperature_for_occupation",
    "derive_rates",
    "PRESETS",
    "preset",
    "CONFIG_KEYS",
    "parse_config_text",
    "load_config",
    "params_from_mapping",
    "params_to_mapping",
]

FLAT = "flat-approximation"
LINEAR = "linear"
_SPECTRUM_KINDS = (FLAT, LINEAR)

# h / k_B in K per THz
_H_OVER_K = constants.h * 1e12 / constants.k


def planck_occupation(frequency, temperature):
    """Bose-Einstein occupation 1 / (exp(h f / k_B T) - 1).

    ``frequency`` is in THz, ``temperature`` in K. Accepts scalars or arrays.
    """
    f = np.asarray(frequency, dtype=float)
    T = np.asarray(temperature, dtype=float)
    if np.any(f <= 0) or np.any(T <= 0):
        raise DomainError("planck_occupation needs frequency > 0 and temperature > 0")
    x = _H_OVER_K * f / T
    with np.errstate(over="ignore"):
        out = 1.0 / np.expm1(x)
    return float(out) if out.ndim == 0 else out


def temperature_for_occupation(frequency, nbar):
    """Inverse of :func:`planck_occupation` at fixed frequency."""
    if frequency <= 0 or nbar <= 0:
        raise DomainError("temperature_for_occupation needs frequency > 0 and nbar > 0")
    return _H_OVER_K * frequency / math.log1p(1.0 / nbar)


@dataclass(frozen=True)
class ModeSpectrum:
    """Mode-frequency rule for the D+1 vibrational modes.

    ``flat-approximation`` replaces every bath Planck factor by the one at the
    lowest mode. ``linear`` spaces the mode frequencies evenly between
    ``omega_min`` and ``omega_max`` (THz).
    """

    kind: str = FLAT
    omega_min: float = 0.314
    omega_max: float = 0.314

    def __post_init__(self):
        if self.kind not in _SPECTRUM_KINDS:
            raise DomainError(f"unknown spectrum kind {self.kind!r}; expected one of {_SPECTRUM_KINDS}")
        if not self.omega_min > 0:
            raise DomainError("omega_min must be positive")
        if self.omega_max < self.omega_min:
            raise DomainError("omega_max must be >= omega_min")

    def frequencies(self, D: int) -> np.ndarray:
        if self.kind == FLAT:
            return np.full(D + 1, self.omega_min)
        return np.linspace(self.omega_min, self.omega_max, D + 1)


@dataclass(frozen=True)
class ModelParams:
    r: float
    phi: float
    chi: float
    D: int
    omega0: float = 0.314
    nbar: float = 16.0
    spectrum: ModeSpectrum = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if isinstance(self.D, float):
            if not self.D.is_integer():
                raise DomainError("D must be an integer")
            object.__setattr__(self, "D", int(self.D))
        checks = [
            (self.r >= 0, "r must be >= 0"),
            (self.phi > 0, "phi must be > 0"),
            (self.chi >= 0, "chi must be >= 0"),
            (self.D >= 1, "D must be >= 1"),
            (self.omega0 > 0, "omega0 must be > 0"),
            (self.nbar >= 0, "nbar must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise DomainError(msg)
        for name in ("r", "phi", "chi", "omega0", "nbar"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.spectrum is None:
            object.__setattr__(self, "spectrum", ModeSpectrum(FLAT, self.omega0, self.omega0))
        elif not math.isclose(self.spectrum.omega_min, self.omega0, rel_tol=1e-12):
            raise DomainError("spectrum.omega_min must equal omega0")

    @classmethod
    def from_temperature(cls, r, phi, chi, D, omega0, temperature, spectrum=None):
        return cls(r, phi, chi, D, omega0, planck_occupation(omega0, temperature), spectrum)

    def with_(self, **changes) -> "ModelParams":
        """Copy with fields replaced; keeps the spectrum anchored to omega0."""
        if "omega0" in changes and "spectrum" not in changes:
            sp = self.spectrum
            changes["spectrum"] = ModeSpectrum(sp.kind, changes["omega0"], max(sp.omega_max, changes["omega0"]))
        return replace(self, **changes)

    @property
    def temperature(self) -> float:
        """Bath temperature (K) consistent with ``nbar`` at ``omega0``."""
        return temperature_for_occupation(self.omega0, self.nbar)


@dataclass(frozen=True)
class DerivedRates:
    N: float
    Nr: float
    Nth: float
    rc: float
    X: float
    Y: float
    alpha: float
    beta: float
    a: float
    b: float
    n_cr: float  # predicted peak of P(n0); -inf without redistribution


def derive_rates(p: ModelParams) -> DerivedRates:
    """Total phonon number, threshold and the detailed-balance coefficients."""
    m = p.D + 1
    Nr = m * p.r / p.phi
    Nth = m * p.nbar
    N = Nr + Nth
    if p.chi > 0:
        rc = p.phi / m * (1.0 + p.phi / p.chi)
    else:
        rc = math.inf
    X = p.r + p.phi * p.nbar + p.chi * (p.nbar + 1) * (N + 1)
    Y = p.r + p.phi * (p.nbar + 1) + p.chi * p.nbar * (N + p.D)
    return DerivedRates(
        N=N,
        Nr=Nr,
        Nth=Nth,
        rc=rc,
        X=X,
        Y=Y,
        alpha=p.chi * (p.nbar + 1),
        beta=p.chi * p.nbar,
        a=m * p.chi / p.phi,
        b=1.0 + m * (p.nbar + 1) * p.chi / p.phi,
        n_cr=N + 1 - p.phi / p.chi - p.nbar * p.D if p.chi > 0 else -math.inf,
    )


def _lysozyme_chi(r=16.0, phi=1.0, D=200, nbar=None, eta=0.5):
    # chi at which the far-above-threshold condensate ratio equals eta at pump r
    nbar = planck_occupation(0.4, 280.0) if nbar is None else nbar
    return phi**2 / ((1 - eta) * (D + 1) * (r + phi * nbar) - phi * nbar * D)


_LYSO_NBAR = planck_occupation(0.4, 280.0)

PRESETS: dict[str, ModelParams] = {
    "bsa-280": ModelParams(r=220.0, phi=6.0, chi=0.07, D=200, omega0=0.314, nbar=16.0),
    "bsa-34": ModelParams(r=105.0, phi=6.0, chi=0.07, D=200, omega0=0.314, nbar=1.5),
    "lysozyme": ModelParams(
        r=16.0, phi=1.0, chi=_lysozyme_chi(nbar=_LYSO_NBAR), D=200, omega0=0.4, nbar=_LYSO_NBAR
    ),
}


def preset(name: str) -> ModelParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


CONFIG_KEYS = (
    "r_ghz",
    "phi_ghz",
    "chi_ghz",
    "D",
    "f0_thz",
    "nbar",
    "temperature_k",
    "spectrum_kind",
    "fmax_thz",
)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines. ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _num(key, value, cast=float):
    try:
        v = cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {value!r} as {cast.__name__}") from None
    return v


def params_from_mapping(values: Mapping[str, object], base: ModelParams | None = None) -> ModelParams:
    """Build parameters from config keys, layered over ``base`` when given.

    ``nbar`` and ``temperature_k`` are mutually exclusive within one mapping.
    """
    unknown = set(values) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    if "nbar" in values and "temperature_k" in values:
        raise ConfigError("give either nbar or temperature_k, not both")

    if base is None:
        missing = [k for k in ("r_ghz", "phi_ghz", "chi_ghz", "D", "f0_thz") if k not in values]
        if "nbar" not in values and "temperature_k" not in values:
            missing.append("nbar|temperature_k")
        if missing:
            raise MissingParameterError(f"missing required parameters: {missing}")
        cur = dict(r=0.0, phi=1.0, chi=0.0, D=1, omega0=1.0, nbar=0.0, kind=FLAT, fmax=None)
    else:
        cur = dict(
            r=base.r,
            phi=base.phi,
            chi=base.chi,
            D=base.D,
            omega0=base.omega0,
            nbar=base.nbar,
            kind=base.spectrum.kind,
            fmax=base.spectrum.omega_max if base.spectrum.kind == LINEAR else None,
        )

    mapping = {"r_ghz": "r", "phi_ghz": "phi", "chi_ghz": "chi", "f0_thz": "omega0", "nbar": "nbar"}
    for key, attr in mapping.items():
        if key in values:
            cur[attr] = _num(key, values[key])
    if "D" in values:
        cur["D"] = _num("D", values["D"], int)
    if "spectrum_kind" in values:
        cur["kind"] = str(values["spectrum_kind"])
    if "fmax_thz" in values:
        cur["fmax"] = _num("fmax_thz", values["fmax_thz"])
    if "temperature_k" in values:
        T = _num("temperature_k", values["temperature_k"])
        if T <= 0:
            raise RangeError("temperature_k must be positive")
        cur["nbar"] = planck_occupation(cur["omega0"], T)

    if cur["kind"] not in _SPECTRUM_KINDS:
        raise RangeError(f"spectrum_kind must be one of {_SPECTRUM_KINDS}")
    if cur["kind"] == LINEAR:
        fmax = cur["fmax"] if cur["fmax"] is not None else 2.0 * cur["omega0"]
    else:
        fmax = cur["omega0"]
    try:
        spectrum = ModeSpectrum(cur["kind"], cur["omega0"], fmax)
        return ModelParams(cur["r"], cur["phi"], cur["chi"], cur["D"], cur["omega0"], cur["nbar"], spectrum)
    except DomainError as exc:
        raise RangeError(f"invalid parameter range: {exc}") from exc


def params_to_mapping(p: ModelParams) -> dict[str, object]:
    """Resolved parameters under the config key names (``nbar`` form)."""
    out: dict[str, object] = {
        "r_ghz": p.r,
        "phi_ghz": p.phi,
        "chi_ghz": p.chi,
        "D": p.D,
        "f0_thz": p.omega0,
        "nbar": p.nbar,
        "spectrum_kind": p.spectrum.kind,
    }
    if p.spectrum.kind == LINEAR:
        out["fmax_thz"] = p.spectrum.omega_max
    return out

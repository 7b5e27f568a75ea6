"""Deterministic rate equations for the mode occupations.

Covers the closed total-number law, the laser-like equation for the lowest
mode under the factorized closure, the decorrelated multimode equations and
the critical scaling of the condensate just above threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import root

from .errors import DomainError, UsageError
from .params import FLAT, LINEAR, ModelParams, derive_rates, planck_occupation
from .timeseries import TimeSeries, check_time_grid

__all__ = [
    "MeanFieldState",
    "SteadyStateReport",
    "CriticalScan",
    "total_number_evolution",
    "n0_rate_rhs",
    "meanfield_steady_n0",
    "formal_n0_from_Ne",
    "froehlich_multimode_rhs",
    "two_phonon_terms",
    "relax_multimode",
    "evolve_multimode",
    "critical_exponent_scan",
]

RTOL = 1e-9
ATOL = 1e-12

BELOW = "below-threshold"
ABOVE = "above-threshold"


@dataclass
class MeanFieldState:
    n0: float
    nl: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.nl = np.asarray(self.nl, dtype=float)
        if not (np.isfinite(self.n0) and np.all(np.isfinite(self.nl))):
            raise DomainError("occupations must be finite")
        if self.n0 < 0 or np.any(self.nl < 0):
            raise DomainError("occupations must be non-negative")

    @classmethod
    def from_array(cls, n, time=0.0):
        n = np.asarray(n, dtype=float)
        return cls(float(n[0]), n[1:].copy(), time)

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.n0], self.nl))

    @property
    def total(self) -> float:
        return self.n0 + float(self.nl.sum())


@dataclass
class SteadyStateReport:
    n0_mean: float
    condensate_fraction: float
    branch: str
    solver: dict = field(default_factory=dict)


@dataclass
class CriticalScan:
    exponent: float
    F0: float
    F1: float
    residual: float
    r: np.ndarray
    n0: np.ndarray


def total_number_evolution(p: ModelParams, N0: float, t_grid) -> TimeSeries:
    """Integrate dN/dt = (D+1)(r + phi nbar) - phi N from N(0) = N0."""
    if N0 < 0:
        raise DomainError("N0 must be non-negative")
    t = check_time_grid(t_grid)
    source = (p.D + 1) * (p.r + p.phi * p.nbar)

    sol = solve_ivp(
        lambda _t, y: source - p.phi * y,
        (0.0, t[-1]),
        [float(N0)],
        method="RK45",
        t_eval=t,
        rtol=RTOL,
        atol=ATOL,
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    N_inf = source / p.phi
    return TimeSeries(t, {"N": sol.y[0]}, {"N_stationary": N_inf, "method": "RK45"})


def _gain_and_source(p: ModelParams):
    # a (r - r_c) and b (r + phi nbar), written so that chi = 0 stays finite
    d = derive_rates(p)
    gain = p.chi * d.Nr - p.phi - p.chi
    source = p.r + p.phi * p.nbar + p.chi * (p.nbar + 1) * d.N
    return gain, source


def n0_rate_rhs(p: ModelParams, n0, second_moment_closure: str = "factorized", second_moment=None):
    """d<n0>/dt of the lowest mode (GHz).

    With ``second_moment_closure="factorized"`` the second moment is replaced
    by ``n0**2``. ``"exact"`` uses the supplied ``second_moment`` instead,
    which turns the expression into an exact moment identity of the
    single-mode master equation.
    """
    n0 = np.asarray(n0, dtype=float)
    if np.any(n0 < 0):
        raise DomainError("n0 must be non-negative")
    if second_moment_closure == "factorized":
        m2 = n0 * n0
    elif second_moment_closure == "exact":
        if second_moment is None:
            raise UsageError("closure 'exact' needs second_moment")
        m2 = np.asarray(second_moment, dtype=float)
    else:
        raise UsageError(f"unknown closure {second_moment_closure!r}")
    gain, source = _gain_and_source(p)
    out = gain * n0 - p.chi * m2 + source
    return float(out) if out.ndim == 0 else out


def meanfield_steady_n0(p: ModelParams) -> SteadyStateReport:
    """Non-negative root of chi n^2 - gain n - source = 0."""
    d = derive_rates(p)
    gain, source = _gain_and_source(p)
    if p.chi == 0:
        n0 = source / -gain
    else:
        disc = math.sqrt(gain * gain + 4.0 * p.chi * source)
        # pick the form without cancellation
        if gain >= 0:
            n0 = (gain + disc) / (2.0 * p.chi)
        else:
            n0 = 2.0 * source / (disc - gain)
    branch = ABOVE if p.r > d.rc else BELOW
    return SteadyStateReport(
        n0_mean=n0,
        condensate_fraction=n0 / d.N if d.N > 0 else 0.0,
        branch=branch,
        solver={"method": "quadratic-root", "gain": gain, "source": source, "rc": d.rc},
    )


def formal_n0_from_Ne(p: ModelParams, Ne: float) -> float:
    """Stationary <n0> given the excited-mode total <N_e>."""
    bound = math.inf if p.chi == 0 else p.phi / p.chi + p.D * p.nbar
    if Ne >= bound:
        raise DomainError(f"Ne = {Ne} violates the positivity bound Ne < phi/chi + D nbar = {bound}")
    if Ne < 0:
        raise DomainError("Ne must be non-negative")
    num = p.r + p.phi * p.nbar + p.chi * (p.nbar + 1) * Ne
    den = p.phi - p.chi * (Ne - p.D * p.nbar)
    return num / den


def two_phonon_terms(p: ModelParams, n) -> np.ndarray:
    """Redistribution part of the decorrelated rate equations (flat bath)."""
    n = np.asarray(n, dtype=float)
    nb = p.nbar
    total = n.sum()
    below = np.cumsum(n) - n  # sum over j < l
    above = total - below - n  # sum over j > l
    idx = np.arange(n.size)
    count_above = n.size - 1 - idx
    count_below = idx
    down_in = (nb + 1) * (n + 1) * above - nb * n * (above + count_above)
    up_in = nb * (n + 1) * below - (nb + 1) * n * (below + count_below)
    return p.chi * (down_in + up_in)


def _boltzmann_rhs(p: ModelParams, n: np.ndarray) -> np.ndarray:
    T = p.temperature
    f = p.spectrum.frequencies(p.D)
    nbl = planck_occupation(f, T)
    # x_l = h f_l / k T, written through the Planck factor
    ex = 1.0 + 1.0 / nbl
    one = p.r - p.phi * nbl * (n * ex - (n + 1))

    inv = 1.0 / ex
    w = (n + 1) * inv  # (n_j + 1) exp(-x_j)
    cw = np.cumsum(w)
    cn = np.cumsum(n)
    w_below = cw - w
    w_above = cw[-1] - cw
    n_below = cn - n
    n_above = cn[-1] - cn
    nb = p.nbar
    two = -p.chi * (
        (nb + 1) * (n * ex * w_above - (n + 1) * n_above)
        + nb * (n * ex * w_below - (n + 1) * n_below)
    )
    return one + two


def froehlich_multimode_rhs(p: ModelParams, state) -> np.ndarray:
    """d<n_l>/dt for l = 0..D under the mode-decorrelation closure.

    ``state`` is a :class:`MeanFieldState` or an array of D+1 occupations.
    The flat-approximation form conserves the total number exactly in the
    redistribution terms; the linear-spectrum form keeps mode-resolved
    Boltzmann factors exp[h (f_l - f_j) / kT] and the mode-resolved Planck factors
    in the one-phonon terms.
    """
    n = state.as_array() if isinstance(state, MeanFieldState) else np.asarray(state, dtype=float)
    if n.shape != (p.D + 1,):
        raise UsageError(f"state must hold D+1 = {p.D + 1} occupations")
    if p.spectrum.kind == FLAT:
        one = p.r + p.phi * (p.nbar * (n + 1) - (p.nbar + 1) * n)
        return one + two_phonon_terms(p, n)
    if p.spectrum.kind == LINEAR:
        if p.nbar <= 0:
            raise UsageError("linear spectrum needs nbar > 0 to define a bath temperature")
        return _boltzmann_rhs(p, n)
    raise UsageError(f"unsupported spectrum kind {p.spectrum.kind!r}")


def _initial_occupations(p: ModelParams) -> np.ndarray:
    if p.spectrum.kind == LINEAR and p.nbar > 0:
        return np.asarray(planck_occupation(p.spectrum.frequencies(p.D), p.temperature), dtype=float)
    return np.full(p.D + 1, p.nbar)


def evolve_multimode(p: ModelParams, t_grid, initial=None) -> TimeSeries:
    """Integrate the decorrelated multimode equations on ``t_grid``.

    Columns: ``n0``, ``N`` and ``n_1`` .. ``n_D``.
    """
    t = check_time_grid(t_grid)
    y0 = _initial_occupations(p) if initial is None else np.asarray(
        initial.as_array() if isinstance(initial, MeanFieldState) else initial, dtype=float
    )
    sol = solve_ivp(
        lambda _t, y: froehlich_multimode_rhs(p, y),
        (0.0, t[-1]),
        y0,
        method="RK45",
        t_eval=t,
        rtol=RTOL,
        atol=ATOL,
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    cols = {"n0": sol.y[0], "N": sol.y.sum(axis=0)}
    for l in range(1, p.D + 1):
        cols[f"n_{l}"] = sol.y[l]
    return TimeSeries(t, cols, {"spectrum_kind": p.spectrum.kind, "method": "RK45"})


def relax_multimode(p: ModelParams, initial=None, tol=1e-8, t_chunk=None, max_chunks=200):
    """Steady state of the multimode equations by time relaxation.

    The state is integrated forward in chunks of ``t_chunk`` (default 5/phi)
    until ``max|rhs| <= tol * scale``, where ``scale`` is the largest single
    gain term (at least 1 GHz), so the criterion stays meaningful when the
    rates reach 1e4 GHz. Returns ``(MeanFieldState, info)``.
    """
    y = _initial_occupations(p) if initial is None else np.asarray(initial, dtype=float)
    t_chunk = 5.0 / p.phi if t_chunk is None else t_chunk
    fun = lambda _t, v: froehlich_multimode_rhs(p, v)  # noqa: E731
    t_now = 0.0
    scale = 1.0
    resid = math.inf
    chunks = 0
    for chunks in range(1, max_chunks + 1):
        sol = solve_ivp(fun, (0.0, t_chunk), y, method="RK45", rtol=RTOL, atol=ATOL)
        if not sol.success:
            raise RuntimeError(sol.message)
        y = np.clip(sol.y[:, -1], 0.0, None)
        t_now += t_chunk
        rhs = froehlich_multimode_rhs(p, y)
        scale = max(1.0, _rate_scale(p, y))
        resid = float(np.max(np.abs(rhs)))
        if resid <= tol * scale:
            break
        # once relaxation has stalled at the integrator's noise floor, finish
        # with a Newton polish and keep it only if occupations stay positive
        if resid <= 1e-4 * scale:
            pol = root(lambda v: froehlich_multimode_rhs(p, v), y, method="hybr", tol=1e-14)
            if np.all(pol.x >= 0):
                r2 = float(np.max(np.abs(froehlich_multimode_rhs(p, pol.x))))
                if r2 < resid:
                    y, resid = pol.x, r2
                    if resid <= tol * scale:
                        break
    info = {
        "time_ns": t_now,
        "chunks": chunks,
        "max_abs_rhs": resid,
        "rate_scale": scale,
        "converged": resid <= tol * scale,
        "spectrum_kind": p.spectrum.kind,
    }
    return MeanFieldState.from_array(y, t_now), info


def _rate_scale(p: ModelParams, n: np.ndarray) -> float:
    total = n.sum()
    return float(np.max(p.r + p.phi * (p.nbar + 1) * (n + 1) + p.chi * (p.nbar + 1) * (n + 1) * (total + p.D)))


def critical_exponent_scan(p: ModelParams, r_window=None, n_points: int = 41) -> CriticalScan:
    """Fit the scaling of the mean-field <n0> just above threshold.

    ``r_window = (lo, hi)`` must satisfy lo <= r_c < hi; it defaults to
    (r_c, 1.2 r_c). The exponent is the log-log slope of n0 - n0(r_c)
    against r - r_c over the upper half of the window; F0 and F1 come from a
    straight-line fit over the same points.
    """
    d = derive_rates(p)
    if not math.isfinite(d.rc):
        raise DomainError("no condensation threshold for chi = 0")
    lo, hi = (d.rc, 1.2 * d.rc) if r_window is None else r_window
    if not (lo <= d.rc < hi):
        raise UsageError(f"window ({lo}, {hi}) does not straddle r_c = {d.rc}")
    n0c = meanfield_steady_n0(p.with_(r=d.rc)).n0_mean
    mid = d.rc + 0.5 * (hi - d.rc)
    r = np.linspace(mid, hi, n_points)
    n0 = np.array([meanfield_steady_n0(p.with_(r=float(x))).n0_mean for x in r])
    dr = r - d.rc
    dn = n0 - n0c
    exponent = float(np.polyfit(np.log(dr), np.log(dn), 1)[0])
    F1, F0 = np.polyfit(dr, n0, 1)
    fit = F0 + F1 * dr
    residual = float(np.sqrt(np.mean((n0 - fit) ** 2)) / max(abs(F0), 1.0))
    return CriticalScan(exponent, float(F0), float(F1), residual, r, n0)

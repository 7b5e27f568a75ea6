"""Stationary phonon-number statistics of the lowest mode.

The canonical distribution comes from the detailed-balance ratio

    P(n) / P(n-1) = (X - alpha n) / (Y - beta n)

accumulated in log space. The log-Gamma closed form is kept as an
independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect
from scipy.special import gammaln

from .errors import DomainError, UsageError
from .params import DerivedRates, ModelParams, derive_rates

__all__ = [
    "ANALYTIC",
    "CLOSED_FORM",
    "ODE_STEADY",
    "SSA_HISTOGRAM",
    "PhononDistribution",
    "StatisticsReport",
    "natural_support_end",
    "steady_distribution",
    "log_ratio_closed_form",
    "closed_form_check",
    "closed_form_moments",
    "statistics",
    "AsymptoticStatistics",
    "asymptotic_statistics",
    "sub_poissonian_threshold",
    "mandel_q_at",
]

ANALYTIC = "analytic-recursion"
CLOSED_FORM = "closed-form"
ODE_STEADY = "ode-steady"
SSA_HISTOGRAM = "ssa-histogram"


@dataclass(frozen=True)
class PhononDistribution:
    probs: np.ndarray
    n_max: int
    provenance: str
    tail_mass_bound: float = 0.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (self.n_max + 1,):
            raise UsageError("probs must cover the support 0..n_max")
        if np.any(probs < 0):
            raise DomainError("probabilities must be non-negative")
        object.__setattr__(self, "probs", probs)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.n_max + 1)

    def moments(self):
        n = self.support.astype(float)
        mean = float(np.dot(n, self.probs))
        second = float(np.dot(n * n, self.probs))
        return mean, second


@dataclass(frozen=True)
class StatisticsReport:
    mean: float
    second_moment: float
    variance: float
    mandel_q: float
    condensate_fraction: float
    n_cr: float

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "second_moment": self.second_moment,
            "variance": self.variance,
            "mandel_q": self.mandel_q,
            "fraction": self.condensate_fraction,
            "n_cr": self.n_cr,
        }


def natural_support_end(rates: DerivedRates) -> float:
    """Largest n0 with a positive stationary weight (inf when alpha = 0)."""
    if rates.alpha == 0:
        return math.inf
    return math.ceil(rates.X / rates.alpha) - 1


def _log_ratios(rates: DerivedRates, n: np.ndarray) -> np.ndarray:
    up = rates.X - rates.alpha * n
    down = rates.Y - rates.beta * n
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(up > 0, np.log(np.where(up > 0, up, 1.0)) - np.log(down), -np.inf)
    return out


def steady_distribution(p: ModelParams, n_max: int | None = None) -> PhononDistribution:
    """Detailed-balance stationary distribution on 0..n_max (default ceil(N))."""
    d = derive_rates(p)
    if n_max is None:
        n_max = max(1, math.ceil(d.N - 1e-9))
    n_max = int(n_max)
    if n_max < 1:
        raise UsageError("n_max must be >= 1")
    n = np.arange(1, n_max + 1, dtype=float)
    logp = np.concatenate(([0.0], np.cumsum(_log_ratios(d, n))))
    logp -= logp.max()
    w = np.exp(logp)
    probs = w / w.sum()

    edge = n_max + 1
    up = d.X - d.alpha * edge
    if up <= 0:
        tail = 0.0
    else:
        ratio = up / (d.Y - d.beta * edge)
        tail = math.inf if ratio >= 1 else float(probs[-1] * ratio / (1.0 - ratio))
    return PhononDistribution(probs, n_max, ANALYTIC, tail)


def log_ratio_closed_form(p: ModelParams, n0) -> np.ndarray:
    """log P(n0)/P(0) from the Gamma-function solution (needs beta > 0)."""
    d = derive_rates(p)
    if d.beta <= 0:
        raise DomainError("closed form needs beta = chi nbar > 0; use steady_distribution")
    n0 = np.asarray(n0, dtype=float)
    xa = d.X / d.alpha
    yb = d.Y / d.beta
    if np.any(n0 < 0) or np.any(n0 >= xa) or np.any(n0 >= yb):
        raise DomainError("n0 outside the range where the Gamma arguments stay positive")
    return (
        n0 * math.log(d.alpha / d.beta)
        + gammaln(xa)
        + gammaln(yb - n0)
        - gammaln(xa - n0)
        - gammaln(yb)
    )


def closed_form_check(p: ModelParams, n0: int) -> float:
    """P(n0)/P(0) from log-Gamma differences."""
    return float(np.exp(log_ratio_closed_form(p, n0)))


def closed_form_moments(p: ModelParams, p0: float, n_max: int):
    """Mean and second moment from the exact summed moment relations.

    ``p0`` is P(0) of the distribution truncated at ``n_max``; the boundary
    term at the truncation edge is evaluated through log-Gamma. Returns
    ``(mean, second_moment)``.
    """
    d = derive_rates(p)
    if d.alpha == d.beta:
        raise DomainError("moment relations need alpha > beta (chi > 0)")
    if d.beta <= 0:
        raise DomainError("moment relations in this form need beta > 0")
    xa = d.X / d.alpha
    yb = d.Y / d.beta
    N = n_max
    edge = xa - 1 - N
    if edge == 0:
        term = 0.0
    else:
        lg = (
            N * math.log(d.alpha / d.beta)
            + gammaln(xa)
            + gammaln(yb - N)
            - gammaln(xa - N)
            - gammaln(yb)
        )
        # Gamma(xa)/Gamma(xa-1-N) = Gamma(xa)/Gamma(xa-N) * (xa-1-N)
        term = math.exp(math.log(p0) + lg) * edge if p0 > 0 else 0.0
    k = d.alpha / (d.alpha - d.beta)
    mean = k * (xa - 1 - d.Y / d.alpha * (1 - p0) - term)
    second = k * (((d.X - d.Y - d.beta) / d.alpha - 1) * mean + d.Y / d.alpha * (1 - p0) - N * term)
    return mean, second


def statistics(dist: PhononDistribution, rates: DerivedRates) -> StatisticsReport:
    total = dist.probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise UsageError(f"distribution not normalized (sum = {total})")
    mean, second = dist.moments()
    var = max(second - mean * mean, 0.0)
    q = var / mean - 1.0 if mean > 0 else 0.0
    return StatisticsReport(
        mean=mean,
        second_moment=second,
        variance=var,
        mandel_q=q,
        condensate_fraction=mean / rates.N if rates.N > 0 else 0.0,
        n_cr=rates.n_cr,
    )



@dataclass(frozen=True)
class AsymptoticStatistics:
    mean: float
    mandel_q: float
    eta: float
    mandel_q_explicit: float


def asymptotic_statistics(p: ModelParams) -> AsymptoticStatistics:
    """Mean, Mandel Q and condensate ratio with the P(0) terms dropped.

    ``mandel_q`` uses the X, Y, alpha, beta form; ``mandel_q_explicit`` is the
    same limit written out in the physical rates. Valid only well above
    threshold, which is not checked.
    """
    d = derive_rates(p)
    if d.alpha - d.beta <= 0:
        raise DomainError("asymptotic statistics need alpha > beta (chi > 0)")
    gap = d.X - d.Y - d.alpha
    mean = gap / (d.alpha - d.beta)
    q = d.Y / gap - d.alpha / (d.alpha - d.beta)
    m = p.D + 1
    pump = p.r + p.phi * p.nbar
    eta = 1.0 - p.phi * (p.phi + p.chi * p.nbar * p.D) / (p.chi * m * pump)
    q_explicit = (pump * (p.phi - p.chi * m) + p.phi * (p.nbar + 2) * (p.phi + p.chi * p.nbar * p.D)) / (
        p.chi * m * p.r + p.phi * (p.chi * p.nbar - p.phi)
    )
    return AsymptoticStatistics(mean, q, eta, q_explicit)


def mandel_q_at(p: ModelParams, r: float) -> float:
    """Mandel Q of the stationary distribution at pump rate ``r``."""
    q = p.with_(r=float(r))
    return statistics(steady_distribution(q), derive_rates(q)).mandel_q


def _closed_form_threshold(p: ModelParams) -> float:
    if p.chi <= 0 or p.chi / p.phi <= 1.0 / (p.D + 1):
        raise DomainError("no sub-Poissonian threshold: needs chi/phi > 1/(D+1)")
    den = p.D / p.phi - 1.0 / p.chi
    if den <= 0:
        raise DomainError("no sub-Poissonian threshold: needs D/phi > 1/chi")
    return (p.nbar + 1) * (2 * p.phi / p.chi + p.nbar * p.D) / den


def sub_poissonian_threshold(p: ModelParams, method: str = "closed-form", bracket=None, xtol: float = 0.05) -> float:
    """Pump rate (GHz) above which the lowest mode turns sub-Poissonian.

    ``method="closed-form"`` evaluates the far-above-threshold criterion;
    ``method="numeric"`` bisects Q(r) = 0 on the full distribution within
    ``bracket`` (default: r_c to three times the closed-form value).
    The value of ``p.r`` is ignored.
    """
    if method == "closed-form":
        return _closed_form_threshold(p)
    if method != "numeric":
        raise UsageError(f"unknown method {method!r}")
    if bracket is None:
        rc = derive_rates(p).rc
        bracket = (rc, 3.0 * _closed_form_threshold(p))
    lo, hi = map(float, bracket)
    f = lambda r: mandel_q_at(p, r)  # noqa: E731
    qlo, qhi = f(lo), f(hi)
    if not (qlo > 0 > qhi):
        raise DomainError(f"Q does not change sign on [{lo}, {hi}] (Q = {qlo:.4g}, {qhi:.4g})")
    return float(bisect(f, lo, hi, xtol=xtol))

"""Truncated single-mode master equation for the lowest mode.

Population dynamics follow a birth-death generator; the first off-diagonal
coherences follow a three-term recurrence with the same tridiagonal shape.
Both are linear with constant coefficients, so they are propagated exactly by
symmetrizing the tridiagonal matrix and diagonalizing it. Explicit
Runge-Kutta is available for small, non-stiff instances.

All coherence amplitudes live in the frame rotating at the lowest-mode
frequency; only magnitudes are reported.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import spsolve

from .distribution import natural_support_end, statistics, steady_distribution
from .errors import DomainError, UsageError
from .meanfield import meanfield_steady_n0, n0_rate_rhs
from .params import ModelParams, derive_rates
from .timeseries import TimeSeries, check_time_grid

__all__ = [
    "BirthDeathGenerator",
    "PopulationTrajectory",
    "CoherenceState",
    "CoherenceResult",
    "LinewidthReport",
    "build_generator",
    "dynamic_n_max",
    "stationary_vector",
    "evolve_population",
    "moment_identity_residual",
    "coherence_coefficients",
    "detailed_balance_coherence",
    "evolve_coherence",
    "fit_decay_rate",
    "linewidth",
    "ROTATING_FRAME_NOTE",
]

ROTATING_FRAME_NOTE = "amplitudes in the frame rotating at omega0; magnitudes only"
DEFAULT_SOUND_SPEED = 1500.0  # m/s, water
BOUNDARY_WARN = 1e-9
SPECTRAL_MAX_LOG_SPREAD = 12.0


@dataclass(frozen=True)
class BirthDeathGenerator:
    """Rates for n -> n+1 (``up_rates``) and n -> n-1 (``down_rates``), GHz."""

    up_rates: np.ndarray
    down_rates: np.ndarray
    n_max: int

    def __post_init__(self):
        up = np.asarray(self.up_rates, dtype=float)
        down = np.asarray(self.down_rates, dtype=float)
        if up.shape != (self.n_max + 1,) or down.shape != (self.n_max + 1,):
            raise UsageError("rate arrays must cover 0..n_max")
        if np.any(up < 0) or np.any(down < 0):
            raise DomainError("rates must be non-negative")
        if up[-1] != 0 or down[0] != 0:
            raise DomainError("no flow may leave the support")
        object.__setattr__(self, "up_rates", up)
        object.__setattr__(self, "down_rates", down)

    def matrix(self) -> sparse.csr_matrix:
        """dP/dt = G @ P with columns summing to zero."""
        up, down = self.up_rates, self.down_rates
        return sparse.diags(
            [up[:-1], -(up + down), down[1:]],
            offsets=[-1, 0, 1],
            format="csr",
        )

    def apply(self, P: np.ndarray) -> np.ndarray:
        """G @ P without forming the matrix; works on (..., n_max+1) arrays."""
        up, down = self.up_rates, self.down_rates
        out = -(up + down) * P
        out[..., 1:] += up[:-1] * P[..., :-1]
        out[..., :-1] += down[1:] * P[..., 1:]
        return out


def dynamic_n_max(p: ModelParams, cap: int | None = None) -> int:
    """ceil(N) + 6 sqrt(N) margin, limited by where the gain rate vanishes."""
    d = derive_rates(p)
    n = math.ceil(d.N) + math.ceil(6.0 * math.sqrt(max(d.N, 1.0)))
    n = int(min(n, natural_support_end(d)))
    if cap is not None:
        n = min(n, int(cap))
    return max(n, 1)


def build_generator(p: ModelParams, n_max: int | None = None) -> BirthDeathGenerator:
    """Birth-death rates of the lowest mode on 0..n_max (default ceil(N)).

    Up:   [r + phi nbar + chi (nbar+1)(N - n)] (n+1)
    Down: [r + phi (nbar+1) + chi nbar (N - n + D)] n

    The top state reflects. Gain rates that the formula would make negative
    (beyond the natural end of the support) are set to zero.
    """
    d = derive_rates(p)
    if n_max is None:
        n_max = max(1, math.ceil(d.N - 1e-9))
    n = np.arange(int(n_max) + 1, dtype=float)
    up = np.clip(p.r + p.phi * p.nbar + p.chi * (p.nbar + 1) * (d.N - n), 0.0, None) * (n + 1)
    up[-1] = 0.0
    down = (p.r + p.phi * (p.nbar + 1) + p.chi * p.nbar * (d.N - n + p.D)) * n
    return BirthDeathGenerator(up, down, int(n_max))


def stationary_vector(gen: BirthDeathGenerator) -> np.ndarray:
    """Null vector of the generator via a sparse solve with normalization."""
    G = gen.matrix().tolil()
    G[gen.n_max, :] = np.ones(gen.n_max + 1)
    rhs = np.zeros(gen.n_max + 1)
    rhs[-1] = 1.0
    P = spsolve(G.tocsc(), rhs)
    P = np.clip(P, 0.0, None)
    return P / P.sum()


# ---------------------------------------------------------------------------
# exact propagation of symmetrizable tridiagonal systems


def _spectral_propagate(diag, sub, sup, y0, t, n_keep_tol=40.0):
    """y(t) = expm(A t) y0 for tridiagonal A with sub[k] * sup[k] > 0.

    A[k+1, k] = sub[k], A[k, k+1] = sup[k]. Returns an array (len(t), n).
    Eigenpairs decaying faster than exp(-n_keep_tol) by the first positive
    sample time are dropped; their contribution is below that bound.
    """
    prod = sub * sup
    if np.any(prod <= 0):
        raise UsageError("spectral propagation needs strictly positive off-diagonal products")
    # A = H S H^-1 with S symmetric, h_{k+1}/h_k = sqrt(sub_k / sup_k)
    logh = np.concatenate(([0.0], np.cumsum(0.5 * (np.log(sub) - np.log(sup)))))
    logh -= logh.max()
    off = np.sqrt(prod)
    n = diag.size
    t = np.asarray(t, dtype=float)
    tpos = t[t > 0]
    if tpos.size and n > 2000:
        lam_cut = n_keep_tol / tpos.min()
        w, V = eigh_tridiagonal(diag, off, select="v", select_range=(-lam_cut, np.inf))
    else:
        w, V = eigh_tridiagonal(diag, off)
    z0 = y0 * np.exp(-logh)
    coef = V.T @ z0
    h = np.exp(logh)
    out = np.empty((t.size, n))
    for i, ti in enumerate(t):
        if ti == 0:
            out[i] = y0
        else:
            out[i] = h * (V @ (coef * np.exp(w * ti)))
    return out


def _ode_propagate(diag, sub, sup, y0, t, method):
    A = sparse.diags([sub, diag, sup], offsets=[-1, 0, 1], format="csr")
    kw = {}
    if method in ("BDF", "Radau", "LSODA"):
        kw["jac"] = A
    sol = solve_ivp(
        lambda _t, y: A @ y,
        (0.0, float(t[-1])),
        y0,
        method=method,
        t_eval=t,
        rtol=1e-8,
        atol=1e-13,
        **kw,
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y.T


def _propagate(diag, sub, sup, y0, t, method):
    if method == "spectral":
        return _spectral_propagate(diag, sub, sup, y0, t)
    if method in ("RK45", "DOP853", "RK23", "BDF", "Radau", "LSODA"):
        return _ode_propagate(diag, sub, sup, y0, t, method)
    raise UsageError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# populations


@dataclass
class PopulationTrajectory:
    t: np.ndarray
    probs: np.ndarray
    generator: BirthDeathGenerator
    method: str

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.generator.n_max + 1, dtype=float)

    @property
    def total(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.support

    @property
    def second_moment(self) -> np.ndarray:
        n = self.support
        return self.probs @ (n * n)

    def mean_derivative(self) -> np.ndarray:
        """d<n0>/dt along the trajectory, from the generator itself."""
        return self.generator.apply(self.probs) @ self.support

    def as_series(self) -> TimeSeries:
        return TimeSeries(
            self.t,
            {"n0": self.mean, "second_moment": self.second_moment, "norm": self.total},
            {"method": self.method, "n_max": self.generator.n_max},
        )


def _log_similarity_spread(gen: BirthDeathGenerator) -> float:
    up, down = gen.up_rates[:-1], gen.down_rates[1:]
    if np.any(up <= 0):
        return math.inf
    logh = np.concatenate(([0.0], np.cumsum(0.5 * (np.log(up) - np.log(down)))))
    return float(logh.max() - logh.min())


def evolve_population(gen: BirthDeathGenerator, P0, t_grid, method: str = "auto") -> PopulationTrajectory:
    """Propagate the population master equation from ``P0``.

    ``method`` is ``"spectral"`` (exact diagonalization), a ``solve_ivp``
    method name such as ``"RK45"`` or ``"BDF"``, or ``"auto"``. Auto picks
    the spectral route when the symmetrizing similarity is well conditioned
    (stationary weights within ~e^24 of each other) and BDF otherwise; the
    spectral route loses digits to cancellation when the stationary
    distribution spans hundreds of decades.
    """
    P0 = np.asarray(P0, dtype=float)
    if P0.shape != (gen.n_max + 1,):
        raise UsageError(f"P0 must have length n_max + 1 = {gen.n_max + 1}")
    if np.any(P0 < 0) or abs(P0.sum() - 1.0) > 1e-12:
        raise UsageError("P0 must be a normalized probability vector")
    t = check_time_grid(t_grid)
    if method == "auto":
        method = "spectral" if _log_similarity_spread(gen) < SPECTRAL_MAX_LOG_SPREAD else "BDF"
    up, down = gen.up_rates, gen.down_rates
    probs = _propagate(-(up + down), up[:-1], down[1:], P0, t, method)
    if np.max(probs[:, -1]) > BOUNDARY_WARN:
        warnings.warn(
            f"probability at truncation edge n_max={gen.n_max} reached {np.max(probs[:, -1]):.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return PopulationTrajectory(t, probs, gen, method)


def moment_identity_residual(p: ModelParams, traj: PopulationTrajectory) -> np.ndarray:
    """Relative mismatch between d<n0>/dt and the exact first-moment law.

    The law is evaluated with the trajectory's own second moment; residuals
    are scaled by the sum of the magnitudes of its three terms.
    """
    mean, m2 = traj.mean, traj.second_moment
    lhs = traj.mean_derivative()
    rhs = n0_rate_rhs(p, mean, "exact", second_moment=m2)
    gain = rhs - (-p.chi * m2) - n0_rate_rhs(p, 0.0)
    scale = np.abs(gain) + p.chi * m2 + abs(n0_rate_rhs(p, 0.0))
    return np.abs(lhs - rhs) / scale


# ---------------------------------------------------------------------------
# coherence


def coherence_coefficients(p: ModelParams, n0):
    """Return ``(gamma, c, d)`` of the coherence recurrence at ``n0``.

    Accepts integer or real ``n0`` (the linewidth evaluates gamma at the
    mean occupation) and arrays.
    """
    d_ = derive_rates(p)
    n = np.asarray(n0, dtype=float)
    if np.any(n < 0):
        raise DomainError("n0 must be non-negative")
    loss = p.r + p.phi * (p.nbar + 1) + p.chi * p.nbar * (d_.N - n + p.D)
    gain = p.r + p.phi * p.nbar + p.chi * (p.nbar + 1) * (d_.N - n)
    s_lo = np.sqrt(n * (n + 1))
    s_hi = np.sqrt((n + 1) * (n + 2))
    gamma = loss / (4 * (s_lo + n) + 2) + gain / (4 * (s_hi + n) + 6)
    c = s_hi * gain
    d = s_lo * loss
    if n.ndim == 0:
        return float(gamma), float(c), float(d)
    return gamma, c, d


@dataclass
class CoherenceState:
    amps: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if not np.all(np.isfinite(self.amps)):
            raise DomainError("coherence amplitudes must be finite")


def detailed_balance_coherence(p: ModelParams, n_max: int | None = None, rho01: complex = 1.0) -> CoherenceState:
    """Initial amplitudes with c_n rho_n = d_{n+1} rho_{n+1} on 0..n_max-1."""
    d_ = derive_rates(p)
    if n_max is None:
        n_max = max(2, math.ceil(d_.N - 1e-9))
    n = np.arange(int(n_max), dtype=float)
    _, c, d = coherence_coefficients(p, n)
    with np.errstate(divide="ignore"):
        steps = np.where(c[:-1] > 0, np.log(np.where(c[:-1] > 0, c[:-1], 1.0)) - np.log(d[1:]), -np.inf)
    logr = np.concatenate(([0.0], np.cumsum(steps)))
    return CoherenceState(rho01 * np.exp(logr))


def _check_detailed_balance(p: ModelParams, amps: np.ndarray, tol=1e-6):
    n = np.arange(amps.size, dtype=float)
    _, c, d = coherence_coefficients(p, n)
    lhs = c[:-1] * amps[:-1]
    rhs = d[1:] * amps[1:]
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    bad = np.abs(lhs - rhs) > tol * scale
    if np.any(bad):
        k = int(np.argmax(bad))
        raise UsageError(f"initial coherence violates detailed balance at n0={k}")


@dataclass
class CoherenceResult:
    series: TimeSeries
    gamma_fit: float
    gamma_ref: float
    n0_ref: float
    meta: dict = field(default_factory=dict)


def fit_decay_rate(t, magnitude, discard_fraction: float = 0.05) -> float:
    """Exponential rate from a straight-line fit of log magnitude."""
    t = np.asarray(t, dtype=float)
    m = np.asarray(magnitude, dtype=float)
    k = int(math.floor(discard_fraction * t.size))
    t, m = t[k:], m[k:]
    keep = m > 0
    if keep.sum() < 2:
        raise DomainError("not enough positive samples to fit a decay rate")
    slope = np.polyfit(t[keep], np.log(m[keep]), 1)[0]
    return float(-slope)


def evolve_coherence(p: ModelParams, initial: CoherenceState, t_grid=None, method: str = "auto") -> CoherenceResult:
    """Integrate the coherence recurrence and fit its decay rate.

    The reference rate is gamma evaluated at the |rho|-weighted mean of the
    initial profile, which for the detailed-balance profile equals <n0>.
    Without ``t_grid`` the window spans two e-foldings of that rate.
    """
    amps = initial.amps
    if amps.size < 2:
        raise UsageError("need at least two coherence amplitudes")
    _check_detailed_balance(p, amps)
    n = np.arange(amps.size, dtype=float)
    gamma, c, d = coherence_coefficients(p, n)
    mag0 = np.abs(amps)
    if mag0.sum() == 0:
        n_ref = 0.0
    else:
        n_ref = float(np.dot(n, mag0) / mag0.sum())
    gamma_ref = coherence_coefficients(p, n_ref)[0]
    if t_grid is None:
        t_grid = np.linspace(0.0, 2.0 / gamma_ref, 201)
    t = check_time_grid(t_grid)

    diag = -(gamma + c + d)
    sub = c[:-1]
    sup = d[1:]
    if method == "auto":
        method = "spectral" if np.all(sub * sup > 0) else "Radau"
    re = _propagate(diag, sub, sup, amps.real.copy(), t, method)
    if np.any(amps.imag != 0):
        im = _propagate(diag, sub, sup, amps.imag.copy(), t, method)
        total = np.abs(re + 1j * im).sum(axis=1)
    else:
        total = np.abs(re).sum(axis=1)

    if total[-1] > 0:
        gamma_fit = fit_decay_rate(t, total)
    else:
        gamma_fit = math.nan
    series = TimeSeries(t, {"total_coherence_magnitude": total}, {"frame": ROTATING_FRAME_NOTE, "method": method})
    return CoherenceResult(series, gamma_fit, gamma_ref, n_ref, {"method": method})


# ---------------------------------------------------------------------------
# linewidth


@dataclass(frozen=True)
class LinewidthReport:
    gamma0_full: float
    gamma0_approx: float
    lifetime_ns: float
    coherence_length_m: float
    n0_mean: float
    n0_source: str
    sound_speed: float

    def as_dict(self) -> dict:
        return {
            "gamma0_full_ghz": self.gamma0_full,
            "gamma0_approx_ghz": self.gamma0_approx,
            "lifetime_ns": self.lifetime_ns,
            "ell_c_m": self.coherence_length_m,
            "n0_mean": self.n0_mean,
            "n0_source": self.n0_source,
        }


def mean_occupation(p: ModelParams, source: str = "meanfield") -> float:
    if source == "meanfield":
        return meanfield_steady_n0(p).n0_mean
    if source == "distribution":
        return statistics(steady_distribution(p), derive_rates(p)).mean
    raise UsageError(f"unknown n0 source {source!r}")


def linewidth(p: ModelParams, sound_speed: float = DEFAULT_SOUND_SPEED, n0_source: str = "meanfield") -> LinewidthReport:
    """Condensate linewidth, lifetime and coherence length.

    ``gamma0_full`` evaluates the two-term gamma at <n0>; ``gamma0_approx`` is
    the far-above-threshold (r + phi (nbar + 1/2)) / (4 <n0>), which drops the
    redistribution terms. ``n0_source`` selects the factorized mean-field
    <n0> (default) or the mean of the stationary distribution.
    """
    if sound_speed <= 0:
        raise DomainError("sound speed must be positive")
    n0 = mean_occupation(p, n0_source)
    if n0 <= 0:
        raise DomainError("linewidth is undefined for <n0> = 0")
    g_full = coherence_coefficients(p, n0)[0]
    g_approx = (p.r + p.phi * (p.nbar + 0.5)) / (4.0 * n0)
    return LinewidthReport(
        gamma0_full=g_full,
        gamma0_approx=g_approx,
        lifetime_ns=1.0 / g_full,
        coherence_length_m=sound_speed / (g_full * 1e9),
        n0_mean=n0,
        n0_source=n0_source,
        sound_speed=sound_speed,
    )

import numpy as np
import pytest

from froehlich.distribution import steady_distribution
from froehlich.errors import DomainError, UsageError
from froehlich.masterq import (
    CoherenceState,
    build_generator,
    coherence_coefficients,
    detailed_balance_coherence,
    dynamic_n_max,
    evolve_coherence,
    evolve_population,
    fit_decay_rate,
    linewidth,
    moment_identity_residual,
    stationary_vector,
)
from froehlich.meanfield import meanfield_steady_n0
from froehlich.params import ModelParams, derive_rates


def _delta(n_max, k=0):
    P = np.zeros(n_max + 1)
    P[k] = 1.0
    return P


def test_generator_rates(bsa280):
    gen = build_generator(bsa280)
    assert gen.up_rates[0] == pytest.approx(12913.3, abs=0.1)
    assert gen.down_rates[0] == 0.0 and gen.up_rates[-1] == 0.0
    assert np.all(gen.up_rates >= 0) and np.all(gen.down_rates >= 0)
    col = np.asarray(gen.matrix().sum(axis=0)).ravel()
    assert np.max(np.abs(col)) < 1e-9 * gen.up_rates.max()


def test_generator_chi_gain_vanishes_at_N():
    # integer N so that n0 = N lies on the support
    p = ModelParams(r=6.0, phi=6.0, chi=0.3, D=9, nbar=1.0)
    N = derive_rates(p).N
    assert N == 20.0
    gen = build_generator(p, n_max=25)
    n = int(N)
    assert gen.up_rates[n] == pytest.approx((p.r + p.phi * p.nbar) * (n + 1), rel=1e-12)


def test_generator_chi_zero():
    p = ModelParams(r=3.0, phi=2.0, chi=0.0, D=5, nbar=1.5)
    gen = build_generator(p, 30)
    n = np.arange(31)
    up = (p.r + p.phi * p.nbar) * (n + 1)
    up[-1] = 0
    assert np.allclose(gen.up_rates, up)
    assert np.allclose(gen.down_rates, (p.r + p.phi * (p.nbar + 1)) * n)


def test_null_space_matches_recursion(small):
    gen = build_generator(small)
    P = stationary_vector(gen)
    assert np.max(np.abs(P - steady_distribution(small).probs)) < 1e-8
    resid = gen.apply(steady_distribution(small).probs)
    assert np.max(np.abs(resid)) < 1e-8 * gen.up_rates.max()


@pytest.mark.parametrize("r", [0.0, 3.0, 10.0])
def test_stationarity_moderate_N(r):
    p = ModelParams(r=r, phi=6.0, chi=0.07, D=20, nbar=16.0)
    assert derive_rates(p).N <= 500
    gen = build_generator(p)
    P = steady_distribution(p).probs
    assert np.max(np.abs(gen.apply(P))) < 1e-8 * gen.up_rates.max()
    assert np.max(np.abs(stationary_vector(gen) - P)) < 1e-8


def test_evolution_converges(small):
    n_max = dynamic_n_max(small)
    gen = build_generator(small, n_max)
    oracle = steady_distribution(small, n_max).probs
    for method in ("spectral", "RK45", "BDF"):
        traj = evolve_population(gen, _delta(n_max), np.linspace(0, 10, 41), method=method)
        assert np.max(np.abs(traj.total - 1.0)) < 1e-9
        assert np.max(np.abs(traj.probs[-1] - oracle)) < 1e-8


def test_stationary_start_is_constant(small):
    n_max = dynamic_n_max(small)
    gen = build_generator(small, n_max)
    P = steady_distribution(small, n_max).probs
    traj = evolve_population(gen, P, np.linspace(0, 2, 9))
    assert np.max(np.abs(traj.probs - P)) < 1e-12


def test_evolution_rejects_bad_p0(small):
    gen = build_generator(small)
    with pytest.raises(UsageError):
        evolve_population(gen, np.full(gen.n_max + 1, 0.5), [0, 1])
    with pytest.raises(UsageError):
        evolve_population(gen, np.ones(3) / 3, [0, 1])
    with pytest.raises(UsageError):
        evolve_population(gen, _delta(gen.n_max), [0, 1], method="euler")


def test_boundary_warning(small):
    gen = build_generator(small)  # ceil(N): no safety margin
    with pytest.warns(RuntimeWarning):
        evolve_population(gen, _delta(gen.n_max), np.linspace(0, 5, 6))


def test_moment_identity_small(small):
    n_max = dynamic_n_max(small)
    traj = evolve_population(build_generator(small, n_max), _delta(n_max), np.linspace(0, 3, 31))
    assert np.max(moment_identity_residual(small, traj)) < 1e-6


def test_moment_identity_bsa_large(bsa280):
    p = bsa280.with_(r=100.0)
    n_max = dynamic_n_max(p)
    traj = evolve_population(build_generator(p, n_max), _delta(n_max), np.linspace(0, 2, 21))
    assert traj.method == "BDF"
    assert np.max(np.abs(traj.total - 1.0)) < 1e-9
    assert np.max(moment_identity_residual(p, traj)) < 1e-6
    assert traj.mean[-1] == pytest.approx(steady_distribution(p).moments()[0], rel=1e-4)


def test_coherence_coefficients(bsa280):
    g, c, d = coherence_coefficients(bsa280, 0)
    assert d == 0.0
    g, _, _ = coherence_coefficients(bsa280.with_(r=100.0), 3280)
    assert g == pytest.approx(0.313, rel=0.02)
    n = np.arange(10)
    gv, cv, dv = coherence_coefficients(bsa280, n)
    assert np.allclose(gv, [coherence_coefficients(bsa280, int(k))[0] for k in n])
    with pytest.raises(DomainError):
        coherence_coefficients(bsa280, -1)


def test_coherence_chi_zero_expansion():
    p = ModelParams(r=40.0, phi=6.0, chi=0.0, D=10, nbar=2.0)
    for n0 in (1e4, 1e5):
        g = coherence_coefficients(p, n0)[0]
        lead = (2 * p.r + p.phi * (2 * p.nbar + 1)) / (8 * n0)
        assert abs(g - lead) < 5.0 * (p.r + p.phi * (p.nbar + 1)) / n0**2


def test_coherence_fit_above_threshold(bsa280):
    p = bsa280.with_(r=100.0)
    res = evolve_coherence(p, detailed_balance_coherence(p))
    assert res.gamma_fit == pytest.approx(res.gamma_ref, rel=0.10)
    mag = res.series["total_coherence_magnitude"]
    k = len(mag) // 20
    assert np.all(np.diff(mag[k:]) <= 1e-12 * mag[0])
    assert "rotating" in res.series.meta["frame"]


def test_coherence_zero_and_single_term():
    p = ModelParams(r=0.0, phi=6.0, chi=0.0, D=10, nbar=0.0)
    t = np.linspace(0, 1, 21)
    zero = evolve_coherence(p, CoherenceState(np.zeros(6)), t)
    assert np.all(zero.series["total_coherence_magnitude"] == 0)
    amps = np.zeros(6)
    amps[0] = 1.0
    res = evolve_coherence(p, CoherenceState(amps), t)
    g0 = coherence_coefficients(p, 0)[0]
    assert np.allclose(res.series["total_coherence_magnitude"], np.exp(-g0 * t), rtol=1e-7, atol=0)
    assert res.gamma_fit == pytest.approx(g0, rel=1e-6)


def test_coherence_rejects_non_detailed_balance(bsa280):
    init = detailed_balance_coherence(bsa280.with_(r=100.0))
    bad = init.amps.copy()
    bad[10] *= 1.01
    with pytest.raises(UsageError):
        evolve_coherence(bsa280.with_(r=100.0), CoherenceState(bad))
    with pytest.raises(DomainError):
        CoherenceState([np.inf, 0])


def test_fit_decay_rate():
    t = np.linspace(0, 2, 101)
    y = np.exp(-3.0 * t)
    y[:3] = 5.0  # early transient is discarded
    assert fit_decay_rate(t, y) == pytest.approx(3.0, rel=1e-9)


def test_linewidth_values(bsa280):
    lo = linewidth(bsa280.with_(r=0.0))
    hi = linewidth(bsa280.with_(r=100.0))
    assert hi.coherence_length_m == pytest.approx(5e-6, rel=0.15)
    assert lo.coherence_length_m == pytest.approx(326e-9, rel=0.15)
    assert 10 <= hi.lifetime_ns / lo.lifetime_ns <= 20
    # the approximate form drops the redistribution terms that dominate here
    assert hi.gamma0_approx < 0.1 * hi.gamma0_full
    assert hi.n0_mean == meanfield_steady_n0(bsa280.with_(r=100.0)).n0_mean


def test_linewidth_sources_and_errors(bsa280):
    p = bsa280.with_(r=100.0)
    dist = linewidth(p, n0_source="distribution")
    assert dist.n0_mean == pytest.approx(steady_distribution(p).moments()[0])
    with pytest.raises(UsageError):
        linewidth(p, n0_source="guess")
    with pytest.raises(DomainError):
        linewidth(p, sound_speed=0)
    with pytest.raises(DomainError):
        linewidth(ModelParams(r=0.0, phi=6.0, chi=0.0, D=5, nbar=0.0))


def test_linewidth_chi_zero_approx():
    p = ModelParams(r=600.0, phi=1.0, chi=0.0, D=5, nbar=0.5)
    lw = linewidth(p)
    n0 = (p.r + p.phi * p.nbar) / p.phi
    assert lw.n0_mean == pytest.approx(n0)
    assert lw.gamma0_approx == pytest.approx(p.r / (4 * n0), rel=0.01)

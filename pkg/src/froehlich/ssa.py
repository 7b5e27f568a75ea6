"""Exact stochastic simulation (Gillespie direct method) of the phonon kinetics.

Two models share the sampling machinery:

* the single-mode birth-death chain with the rates of ``masterq.build_generator``;
* the full multimode kinetics under the flat approximation, with one-phonon
  births/deaths in every mode and two-phonon transfers between every pair.

Pair channels number O(D^2), but their totals factor into prefix sums, so each
jump costs O(D): pick a donor mode from its aggregate weight, then a partner.

Each trajectory draws from its own PCG64 stream spawned from the master seed
with ``numpy.random.SeedSequence.spawn``; trajectory ``i`` always gets child
``i``, so results do not depend on how trajectories are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DomainError, UsageError
from .masterq import build_generator
from .params import FLAT, ModelParams, derive_rates

__all__ = [
    "RNG_ALGORITHM",
    "JumpConfig",
    "SSAResult",
    "MandelEstimate",
    "simulate_single_mode",
    "simulate_multimode",
    "mandel_from_samples",
    "tv_distance",
]

RNG_ALGORITHM = "PCG64/SeedSequence.spawn"
_MIN_SAMPLES = 1000


@dataclass(frozen=True)
class JumpConfig:
    """Run controls. Times in ns; ``None`` picks 20/phi burn-in and 1/phi stride."""

    seed: int = 0
    n_trajectories: int = 1
    t_burn: float | None = None
    t_sample: float = 1000.0
    sample_stride: float | None = None
    mode_count_override: int | None = None
    max_jumps: int | None = None
    one_phonon: bool = True
    two_phonon: bool = True
    initial_occupation: int | None = None
    jobs: int = 1

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")
        if self.n_trajectories < 1:
            raise UsageError("n_trajectories must be >= 1")
        if self.t_burn is not None and not self.t_burn > 0:
            raise UsageError("t_burn must be > 0")
        if not self.t_sample > 0:
            raise UsageError("t_sample must be > 0")
        if self.sample_stride is not None and not self.sample_stride > 0:
            raise UsageError("sample_stride must be > 0")
        if self.mode_count_override is not None and self.mode_count_override < 1:
            raise UsageError("mode_count_override must be >= 1")
        if self.max_jumps is not None and self.max_jumps < 1:
            raise UsageError("max_jumps must be >= 1")
        if self.jobs < 1:
            raise UsageError("jobs must be >= 1")

    def resolved_times(self, phi: float):
        t_burn = 20.0 / phi if self.t_burn is None else float(self.t_burn)
        stride = 1.0 / phi if self.sample_stride is None else float(self.sample_stride)
        n_samples = int(math.floor(self.t_sample / stride + 1e-9))
        if n_samples < 1:
            raise UsageError("t_sample shorter than one sampling stride")
        return t_burn, stride, n_samples


@dataclass
class SSAResult:
    histogram: np.ndarray  # counts of n0 over 0..len-1
    samples: np.ndarray  # (n_trajectories, n_samples) lowest-mode occupations
    occupation_means: np.ndarray  # per-mode time averages
    total_number_samples: np.ndarray | None
    rng_provenance: dict
    jump_counts: dict = field(default_factory=dict)
    conservation_violations: int = 0
    truncated: bool = False  # True when max_jumps stopped a trajectory early

    def __post_init__(self):
        if np.any(self.histogram < 0):
            raise DomainError("histogram counts must be non-negative")
        if int(self.histogram.sum()) != self.samples.size:
            raise DomainError("histogram total must equal the number of samples")

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    def probabilities(self, n_max: int | None = None) -> np.ndarray:
        h = self.histogram.astype(float)
        if n_max is not None:
            out = np.zeros(n_max + 1)
            k = min(h.size, n_max + 1)
            out[:k] = h[:k]
            out[-1] += h[k:].sum()
            h = out
        return h / h.sum()

    @classmethod
    def from_samples(cls, samples, provenance: dict | None = None) -> "SSAResult":
        """Wrap externally generated occupation samples (rows = blocks)."""
        s = np.atleast_2d(np.asarray(samples))
        if not np.issubdtype(s.dtype, np.integer):
            if not np.all(s == np.round(s)):
                raise UsageError("samples must be integer occupations")
            s = s.astype(np.int64)
        if np.any(s < 0):
            raise DomainError("occupations must be non-negative")
        hist = np.bincount(s.ravel())
        return cls(hist, s, np.array([s.mean()]), None, dict(provenance or {"source": "external"}))


def tv_distance(p, q) -> float:
    """Total-variation distance between two probability vectors (zero-padded)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = max(p.size, q.size)
    p = np.pad(p, (0, n - p.size))
    q = np.pad(q, (0, n - q.size))
    return 0.5 * float(np.abs(p - q).sum())


def _streams(seed: int, n: int):
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _provenance(cfg: JumpConfig) -> dict:
    return {
        "seed": int(cfg.seed),
        "algorithm": RNG_ALGORITHM,
        "stream_rule": "trajectory i uses SeedSequence(seed).spawn(n_trajectories)[i]",
        "n_trajectories": int(cfg.n_trajectories),
    }


def _run_all(fn, cfg: JumpConfig):
    rngs = _streams(cfg.seed, cfg.n_trajectories)
    if cfg.jobs == 1 or cfg.n_trajectories == 1:
        return [fn(i, rng) for i, rng in enumerate(rngs)]
    # kernels release the GIL; map keeps trajectory order
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(fn, range(cfg.n_trajectories), rngs))


# ---------------------------------------------------------------------------
# single mode


@numba.njit(cache=True, nogil=True)
def _chain_kernel(up, down, n_start, t_burn, stride, n_samples, max_jumps, rng):
    samples = np.empty(n_samples, dtype=np.int64)
    n = n_start
    t = 0.0
    ts = t_burn
    k = 0
    jumps = 0
    while k < n_samples:
        total = up[n] + down[n]
        if total <= 0.0:
            while k < n_samples:
                samples[k] = n
                k += 1
            break
        t_next = t + rng.exponential(1.0 / total)
        while k < n_samples and ts < t_next:
            samples[k] = n
            k += 1
            ts = t_burn + k * stride
        if k >= n_samples:
            break
        if max_jumps > 0 and jumps >= max_jumps:
            return samples[:k], jumps, True
        t = t_next
        if rng.random() * total < up[n]:
            n += 1
        else:
            n -= 1
        jumps += 1
    return samples, jumps, False


def simulate_single_mode(p: ModelParams, cfg: JumpConfig, n_max: int | None = None) -> SSAResult:
    """Sample the lowest-mode chain; support defaults to 0..ceil(N)."""
    gen = build_generator(p, n_max)
    t_burn, stride, n_samples = cfg.resolved_times(p.phi)
    n_start = 0 if cfg.initial_occupation is None else int(cfg.initial_occupation)
    if not 0 <= n_start <= gen.n_max:
        raise UsageError("initial_occupation outside the support")
    max_jumps = 0 if cfg.max_jumps is None else int(cfg.max_jumps)

    def one(_i, rng):
        return _chain_kernel(gen.up_rates, gen.down_rates, n_start, t_burn, stride, n_samples, max_jumps, rng)

    runs = _run_all(one, cfg)
    truncated = any(r[2] for r in runs)
    length = min(r[0].size for r in runs)
    samples = np.stack([r[0][:length] for r in runs])
    hist = np.bincount(samples.ravel(), minlength=gen.n_max + 1)
    jumps = int(sum(r[1] for r in runs))
    return SSAResult(
        histogram=hist,
        samples=samples,
        occupation_means=np.array([samples.mean()]) if samples.size else np.array([np.nan]),
        total_number_samples=None,
        rng_provenance=_provenance(cfg),
        jump_counts={"one_phonon": jumps, "two_phonon": 0, "total": jumps},
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# multimode


@numba.njit(cache=True, nogil=True)
def _multimode_kernel(n_init, birth_c, death_c, down_c, up_c, t_burn, stride, n_samples, max_jumps, rng):
    """birth_c (n+1), death_c n per mode; down_c n_j (n_l+1) and up_c n_l (n_j+1)
    for j > l. A transfer j -> l moves one quantum toward the lower mode."""
    M = n_init.size
    n = n_init.copy()
    ntot = 0
    for i in range(M):
        ntot += n[i]
    n0_samples = np.empty(n_samples, dtype=np.int64)
    tot_samples = np.empty(n_samples, dtype=np.int64)
    occ_sum = np.zeros(M)
    w_down = np.empty(M)  # n_j * S_j, S_j = sum_{l<j} (n_l + 1)
    w_up = np.empty(M)  # n_l * T_l, T_l = sum_{j>l} (n_j + 1)
    t = 0.0
    ts = t_burn
    k = 0
    one_jumps = 0
    two_jumps = 0
    violations = 0
    truncated = False
    while k < n_samples:
        s = 0.0
        for j in range(M):
            w_down[j] = n[j] * s
            s += n[j] + 1
        s = 0.0
        for l in range(M - 1, -1, -1):
            w_up[l] = n[l] * s
            s += n[l] + 1
        tot_down = 0.0
        tot_up = 0.0
        if down_c > 0.0:
            for j in range(M):
                tot_down += w_down[j]
            tot_down *= down_c
        if up_c > 0.0:
            for l in range(M):
                tot_up += w_up[l]
            tot_up *= up_c
        tot_birth = birth_c * (ntot + M)
        tot_death = death_c * ntot
        total = tot_birth + tot_death + tot_down + tot_up
        if total <= 0.0:
            t_next = np.inf
        else:
            t_next = t + rng.exponential(1.0 / total)
        while k < n_samples and ts < t_next:
            n0_samples[k] = n[0]
            tot_samples[k] = ntot
            for i in range(M):
                occ_sum[i] += n[i]
            k += 1
            ts = t_burn + k * stride
        if k >= n_samples:
            break
        if max_jumps > 0 and one_jumps + two_jumps >= max_jumps:
            truncated = True
            break
        t = t_next
        u = rng.random() * total
        if u < tot_birth:
            v = rng.random() * (ntot + M)
            acc = 0.0
            i = M - 1
            for m in range(M):
                acc += n[m] + 1
                if v < acc:
                    i = m
                    break
            n[i] += 1
            ntot += 1
            one_jumps += 1
        elif u < tot_birth + tot_death:
            v = rng.random() * ntot
            acc = 0.0
            i = M - 1
            for m in range(M):
                acc += n[m]
                if v < acc and n[m] > 0:
                    i = m
                    break
            n[i] -= 1
            ntot -= 1
            one_jumps += 1
        else:
            before = ntot
            if u < tot_birth + tot_death + tot_down:
                # donor j (weight n_j S_j), then receiver l < j (weight n_l + 1)
                v = rng.random() * (tot_down / down_c)
                acc = 0.0
                j = M - 1
                for m in range(M):
                    acc += w_down[m]
                    if v < acc and w_down[m] > 0:
                        j = m
                        break
                s = 0.0
                for m in range(j):
                    s += n[m] + 1
                v = rng.random() * s
                acc = 0.0
                l = j - 1
                for m in range(j):
                    acc += n[m] + 1
                    if v < acc:
                        l = m
                        break
                n[j] -= 1
                n[l] += 1
            else:
                # donor l (weight n_l T_l), then receiver j > l (weight n_j + 1)
                v = rng.random() * (tot_up / up_c)
                acc = 0.0
                l = 0
                for m in range(M):
                    acc += w_up[m]
                    if v < acc and w_up[m] > 0:
                        l = m
                        break
                s = 0.0
                for m in range(l + 1, M):
                    s += n[m] + 1
                v = rng.random() * s
                acc = 0.0
                j = M - 1
                for m in range(l + 1, M):
                    acc += n[m] + 1
                    if v < acc:
                        j = m
                        break
                n[l] -= 1
                n[j] += 1
            two_jumps += 1
            check = 0
            for m in range(M):
                check += n[m]
            if check != before or n[l] < 0 or n[j] < 0:
                violations += 1
    return n0_samples[:k], tot_samples[:k], occ_sum, one_jumps, two_jumps, violations, truncated


def simulate_multimode(p: ModelParams, cfg: JumpConfig) -> SSAResult:
    """Sample all D+1 modes under the flat approximation.

    ``cfg.mode_count_override`` replaces D (the total-number law then uses the
    smaller mode count). ``cfg.one_phonon`` / ``cfg.two_phonon`` switch channel
    families off. Every two-phonon jump re-sums the occupations and counts any
    change in N_total as a conservation violation.
    """
    if p.spectrum.kind != FLAT:
        raise UsageError("multimode SSA implements the flat-approximation rates only")
    if cfg.mode_count_override is not None:
        p = p.with_(D=int(cfg.mode_count_override))
    M = p.D + 1
    t_burn, stride, n_samples = cfg.resolved_times(p.phi)
    if cfg.initial_occupation is None:
        start = int(round(p.r / p.phi + p.nbar))
    else:
        start = int(cfg.initial_occupation)
    if start < 0:
        raise UsageError("initial_occupation must be >= 0")
    n_init = np.full(M, start, dtype=np.int64)
    birth_c = (p.r + p.phi * p.nbar) if cfg.one_phonon else 0.0
    death_c = (p.r + p.phi * (p.nbar + 1)) if cfg.one_phonon else 0.0
    down_c = p.chi * (p.nbar + 1) if cfg.two_phonon else 0.0
    up_c = p.chi * p.nbar if cfg.two_phonon else 0.0
    max_jumps = 0 if cfg.max_jumps is None else int(cfg.max_jumps)

    def one(_i, rng):
        return _multimode_kernel(n_init, birth_c, death_c, down_c, up_c, t_burn, stride, n_samples, max_jumps, rng)

    runs = _run_all(one, cfg)
    length = min(r[0].size for r in runs)
    samples = np.stack([r[0][:length] for r in runs])
    totals = np.stack([r[1][:length] for r in runs])
    counted = sum(r[0].size for r in runs)
    occ = sum(r[2] for r in runs) / max(counted, 1)
    one_j = int(sum(r[3] for r in runs))
    two_j = int(sum(r[4] for r in runs))
    violations = int(sum(r[5] for r in runs))
    return SSAResult(
        histogram=np.bincount(samples.ravel()) if samples.size else np.zeros(1, dtype=np.int64),
        samples=samples,
        occupation_means=occ,
        total_number_samples=totals,
        rng_provenance=_provenance(cfg),
        jump_counts={"one_phonon": one_j, "two_phonon": two_j, "total": one_j + two_j},
        conservation_violations=violations,
        truncated=any(r[6] for r in runs),
    )


def expected_total_number(p: ModelParams, cfg: JumpConfig | None = None) -> float:
    """Stationary N_total for the mode count actually simulated."""
    if cfg is not None and cfg.mode_count_override is not None:
        p = p.with_(D=int(cfg.mode_count_override))
    return derive_rates(p).N


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class MandelEstimate:
    mean: float
    mandel_q: float
    mean_se: float
    mandel_q_se: float
    n_blocks: int


def _mean_q(x: np.ndarray):
    m = x.mean()
    v = x.var()
    return m, (v / m - 1.0 if m > 0 else 0.0)


def mandel_from_samples(result: SSAResult, min_blocks: int = 20) -> MandelEstimate:
    """Sample mean and Mandel Q with delete-one-block jackknife errors.

    Blocks are whole trajectories when there are at least ``min_blocks`` of
    them; otherwise each trajectory is cut into contiguous time blocks.
    """
    s = np.asarray(result.samples, dtype=float)
    if s.size < _MIN_SAMPLES:
        raise UsageError(f"need at least {_MIN_SAMPLES} samples, got {s.size}")
    if s.shape[0] >= min_blocks:
        blocks = list(s)
    else:
        per = math.ceil(min_blocks / s.shape[0])
        blocks = [b for row in s for b in np.array_split(row, per)]
    flat = np.concatenate(blocks)
    mean, q = _mean_q(flat)
    k = len(blocks)
    sums = np.array([b.sum() for b in blocks])
    sq = np.array([(b * b).sum() for b in blocks])
    cnt = np.array([b.size for b in blocks], dtype=float)
    rest_n = cnt.sum() - cnt
    m_j = (sums.sum() - sums) / rest_n
    v_j = (sq.sum() - sq) / rest_n - m_j**2
    q_j = v_j / m_j - 1.0
    se_m = math.sqrt((k - 1) / k * np.sum((m_j - m_j.mean()) ** 2))
    se_q = math.sqrt((k - 1) / k * np.sum((q_j - q_j.mean()) ** 2))
    return MandelEstimate(float(mean), float(q), se_m, se_q, k)

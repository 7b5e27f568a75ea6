"""Parameter sweeps over r, nbar, chi or D with order-stable parallelism."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .distribution import statistics, steady_distribution
from .errors import DomainError, UsageError
from .masterq import linewidth
from .params import ModelParams, derive_rates

__all__ = ["SWEEP_AXES", "SweepRow", "sweep_point", "sweep"]

# axis name -> (ModelParams field, output column)
SWEEP_AXES = {"r": ("r", "r_ghz"), "nbar": ("nbar", "nbar"), "chi": ("chi", "chi_ghz"), "D": ("D", "D")}


@dataclass(frozen=True)
class SweepRow:
    value: float
    n0_mean: float
    fraction: float
    mandel_q: float
    gamma0_full: float
    gamma0_approx: float
    lifetime_ns: float

    def as_tuple(self):
        return (
            self.value,
            self.n0_mean,
            self.fraction,
            self.mandel_q,
            self.gamma0_full,
            self.gamma0_approx,
            self.lifetime_ns,
        )


COLUMNS = ("n0", "fraction", "Q", "gamma0_ghz", "gamma0_approx_ghz", "lifetime_ns")


def sweep_point(p: ModelParams, n0_source: str = "meanfield") -> SweepRow:
    """Statistics of one parameter set; linewidth columns are NaN when <n0> = 0."""
    s = statistics(steady_distribution(p), derive_rates(p))
    try:
        lw = linewidth(p, n0_source=n0_source)
        g_full, g_approx, life = lw.gamma0_full, lw.gamma0_approx, lw.lifetime_ns
    except DomainError:
        g_full = g_approx = life = math.nan
    return SweepRow(math.nan, s.mean, s.condensate_fraction, s.mandel_q, g_full, g_approx, life)


def _point(args):
    p, axis, value, n0_source = args
    field, _ = SWEEP_AXES[axis]
    q = p.with_(**{field: int(value) if axis == "D" else float(value)})
    row = sweep_point(q, n0_source)
    return SweepRow(value, *row.as_tuple()[1:])


def sweep(p: ModelParams, axis: str, values, jobs: int = 1, n0_source: str = "meanfield") -> list[SweepRow]:
    """One row per value, in input order whatever the scheduling."""
    if axis not in SWEEP_AXES:
        raise UsageError(f"axis must be one of {sorted(SWEEP_AXES)}")
    values = list(values)
    if not values:
        raise UsageError("sweep needs at least one value")
    if axis == "D" and any(float(v) != int(v) for v in values):
        raise UsageError("D values must be integers")
    if jobs < 1:
        raise UsageError("jobs must be >= 1")
    tasks = [(p, axis, v, n0_source) for v in values]
    if jobs == 1 or len(tasks) == 1:
        return [_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_point, tasks))

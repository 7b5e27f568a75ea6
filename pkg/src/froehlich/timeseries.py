from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TimeSeries:
    """Observables sampled on a common time grid (ns)."""

    t: np.ndarray
    columns: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def __len__(self) -> int:
        return len(self.t)


def check_time_grid(t_grid) -> np.ndarray:
    from .errors import UsageError

    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise UsageError("time grid must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(t)) or t[0] < 0:
        raise UsageError("time grid must be finite and start at t >= 0")
    if np.any(np.diff(t) <= 0):
        raise UsageError("time grid must be strictly increasing")
    return t

"""
Automatic domain randomization baseline.

A uniform distribution over [lo_cur, hi_cur] starts collapsed at the center of
the benchmark box and moves one boundary at a time: episodes pinned to a
boundary feed that boundary's buffer, and a full buffer widens the bound when
its mean return reaches t_H or pulls it back when the mean drops below t_L.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .distributions import BoundedSupport
from .estimator import EpisodeRecord

_log = logging.getLogger('curricula.main')

SIDES = ("lo", "hi")
# Half-width of the collapsed starting box, as a fraction of each range.
INITIAL_SPREAD = 1e-6

Boundary = Tuple[int, str]


@dataclass(frozen=True)
class AutoDRState:
    benchmark: BoundedSupport
    lo_cur: Tuple[float, ...]
    hi_cur: Tuple[float, ...]
    delta: Tuple[float, ...]
    t_high: float
    t_low: float
    boundary_prob: float = 0.5
    buffer_size: int = 10
    buffers: Dict[Boundary, Tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.boundary_prob <= 1.0:
            raise ValueError(f"boundary_prob must lie in [0, 1], got {self.boundary_prob}")
        if self.buffer_size < 1:
            raise ValueError("buffer_size must be at least 1")
        if self.t_low > self.t_high:
            raise ValueError(f"t_low ({self.t_low}) cannot exceed t_high ({self.t_high})")

    @classmethod
    def initial(cls, benchmark: BoundedSupport, t_high: float, t_low: Optional[float] = None,
                delta_fraction: float = 0.02, boundary_prob: float = 0.5,
                buffer_size: int = 10) -> "AutoDRState":
        """Collapsed box at the benchmark center; t_L defaults to t_H / 2."""
        spread = INITIAL_SPREAD * benchmark.width
        return cls(
            benchmark=benchmark,
            lo_cur=tuple(benchmark.midpoint - spread),
            hi_cur=tuple(benchmark.midpoint + spread),
            delta=tuple(delta_fraction * benchmark.width),
            t_high=float(t_high),
            t_low=float(t_high / 2.0 if t_low is None else t_low),
            boundary_prob=boundary_prob,
            buffer_size=buffer_size,
        )

    @property
    def dims(self) -> int:
        return self.benchmark.dims

    def entropy(self) -> float:
        return float(sum(math.log(h - l) for l, h in zip(self.lo_cur, self.hi_cur)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": "Uniform",
            "lo": list(self.lo_cur),
            "hi": list(self.hi_cur),
            "names": list(self.benchmark.names),
            "buffers": {f"{d}:{side}": list(values) for (d, side), values in sorted(self.buffers.items())},
        }


def autodr_sample(state: AutoDRState, rng: np.random.Generator) -> Tuple[np.ndarray, Optional[Boundary]]:
    lo, hi = np.asarray(state.lo_cur), np.asarray(state.hi_cur)
    pinned = bool(rng.random() < state.boundary_prob)
    xi = rng.uniform(lo, hi)
    if not pinned:
        return xi, None
    d = int(rng.integers(state.dims))
    side = SIDES[int(rng.integers(2))]
    xi[d] = lo[d] if side == "lo" else hi[d]
    return xi, (d, side)


def _min_width(state: AutoDRState, d: int) -> float:
    return 2.0 * INITIAL_SPREAD * float(state.benchmark.width[d])


def autodr_update(state: AutoDRState, record: EpisodeRecord) -> AutoDRState:
    """Feed one boundary-tagged record; returns the new state."""
    if record.boundary is None:
        raise ValueError("AutoDR update requires a boundary-tagged record")
    d, side = record.boundary
    if side not in SIDES or not 0 <= d < state.dims:
        raise ValueError(f"invalid boundary tag {record.boundary!r}")

    buffers = dict(state.buffers)
    buffer = buffers.get((d, side), ()) + (float(record.return_value),)
    if len(buffer) < state.buffer_size:
        buffers[(d, side)] = buffer
        return replace(state, buffers=buffers)

    buffers.pop((d, side), None)
    mean_return = float(np.mean(buffer))
    lo, hi = list(state.lo_cur), list(state.hi_cur)
    step = state.delta[d]
    floor = _min_width(state, d)
    if mean_return >= state.t_high:
        if side == "lo":
            lo[d] = max(lo[d] - step, state.benchmark.lo[d])
        else:
            hi[d] = min(hi[d] + step, state.benchmark.hi[d])
        _log.debug("AutoDR widened %s bound of dim %d (mean return %.3f)", side, d, mean_return)
    elif mean_return < state.t_low:
        if side == "lo":
            lo[d] = min(lo[d] + step, hi[d] - floor)
        else:
            hi[d] = max(hi[d] - step, lo[d] + floor)
        _log.debug("AutoDR shrank %s bound of dim %d (mean return %.3f)", side, d, mean_return)
    return replace(state, lo_cur=tuple(lo), hi_cur=tuple(hi), buffers=buffers)

"""Plan-cost features extracted along an observed trajectory.

* gradients of costs (GC): per-step drop of the optimal remaining cost to each goal,
* sequential deviations (SD): the same drop measured with a heuristic instead of a planner,
* differential cost maps and the 9-channel frame stack used by the grid network.

All derivatives use previous-minus-current, so moving towards a goal is positive.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .gridworld import GridMap, NavProblem
from .planning import UNIFORM, CostField, CostModel, get_heuristic, source_field

MAX_GOAL_CHANNELS = 5
NUM_CHANNELS = 4 + MAX_GOAL_CHANNELS  # obstacle, walkable, agent, goals..., differential
CH_OBSTACLE, CH_WALKABLE, CH_AGENT, CH_GOAL0 = 0, 1, 2, 3
CH_DIFF = NUM_CHANNELS - 1


class UnreachableCostWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class FeatureSequence:
    values: np.ndarray  # shape (num_goals, T)
    kind: str  # "gc" or "sd"

    @property
    def num_goals(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


def gc_features(p: NavProblem, traj: Sequence, fields: Sequence[CostField]) -> FeatureSequence:
    """Gradient of costs: ``c(s_{t-1}, g) - c(s_t, g)`` for each goal and step.

    Steps touching an unreachable cell give ``inf - inf``; those entries are
    set to 0 and an :class:`UnreachableCostWarning` is emitted.
    """
    rows = np.asarray(traj, dtype=int).reshape(-1, 2)
    costs = np.stack([f.costs[rows[:, 0], rows[:, 1]] for f in fields])  # (G, T+1)
    with np.errstate(invalid="ignore"):
        values = costs[:, :-1] - costs[:, 1:]
    bad = ~np.isfinite(values)
    if bad.any():
        warnings.warn(
            f"{int(bad.sum())} gradient entries involve unreachable cells; set to 0",
            UnreachableCostWarning, stacklevel=2,
        )
        values[bad] = 0.0
    return FeatureSequence(values, "gc")


def sd_features(p: NavProblem, traj: Sequence, h="l2") -> FeatureSequence:
    """Sequential deviations: ``h(s_{t-1}, g) - h(s_t, g)``; no planner involved."""
    hfun = get_heuristic(h)
    est = np.array([[hfun(s, g) for s in traj] for g in p.goals], dtype=float)
    est = est.reshape(len(p.goals), len(traj))
    return FeatureSequence(est[:, :-1] - est[:, 1:], "sd")


def differential_cost_map(m: GridMap, s_prev, s_cur, model: CostModel = UNIFORM) -> np.ndarray:
    """``c(s_prev, q) - c(s_cur, q)`` for every cell q; 0 on blocked or unreachable cells."""
    before = source_field(m, s_prev, model).costs
    after = source_field(m, s_cur, model).costs
    out = np.zeros(m.shape)
    ok = m.passable & np.isfinite(before) & np.isfinite(after)
    out[ok] = before[ok] - after[ok]
    return out


def observation_frame(p: NavProblem, cell) -> np.ndarray:
    """The 8 observation channels for the agent standing on ``cell``."""
    m = p.map
    frame = np.zeros((NUM_CHANNELS - 1,) + m.shape)
    frame[CH_OBSTACLE] = ~m.passable
    frame[CH_WALKABLE] = m.passable
    frame[CH_AGENT, cell[0], cell[1]] = 1.0
    for i, g in enumerate(p.goals):
        frame[CH_GOAL0 + i, g[0], g[1]] = 1.0
    return frame


def build_channel_stack(p: NavProblem, traj: Sequence, model: CostModel = UNIFORM) -> np.ndarray:
    """Frames of shape ``(T, 9, H, W)``; frame t shows s_t plus D(s_{t-1}, s_t).

    Fewer than five goals leave the trailing goal channels empty.
    """
    if len(p.goals) > MAX_GOAL_CHANNELS:
        raise ValueError(f"at most {MAX_GOAL_CHANNELS} goals fit in the channel stack")
    steps = len(traj) - 1
    stack = np.zeros((steps, NUM_CHANNELS) + p.map.shape)
    for t in range(1, len(traj)):
        stack[t - 1, :CH_DIFF] = observation_frame(p, traj[t])
        stack[t - 1, CH_DIFF] = differential_cost_map(p.map, traj[t - 1], traj[t], model)
    return stack


def truncate(traj: Sequence, rho) -> list:
    """First ``ceil(rho% of len(traj))`` cells, never fewer than one."""
    if len(traj) == 0:
        raise ValueError("cannot truncate an empty trajectory")
    rho = Fraction(str(rho)) if isinstance(rho, float) else Fraction(rho)
    if not 0 < rho <= 100:
        raise ValueError(f"observability must lie in (0, 100], got {float(rho)}")
    keep = max(1, math.ceil(rho * len(traj) / 100))
    return list(traj[:keep])


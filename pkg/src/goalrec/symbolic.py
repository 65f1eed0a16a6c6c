"""Cost-based goal recognizers.

Deltas compare the cost of plans that are consistent with the observations
to plans that ignore them; lower deltas mean the goal is better supported.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .gridworld import NavProblem
from .planning import INF, UNIFORM, CostField, CostModel, cost_field, path_cost, shortest_from

DEFAULT_BETA = 1.0


def _check_posterior(probs: np.ndarray) -> np.ndarray:
    assert abs(probs.sum() - 1.0) < 1e-9
    return probs


def ms_delta(p: NavProblem, traj: Sequence, fields: Sequence[CostField]) -> np.ndarray:
    """c(s_t, g) - c(s_0, g) using only the first and last observed cells."""
    s0, st = traj[0], traj[-1]
    out = np.empty(len(fields))
    for i, f in enumerate(fields):
        now, then = f[st], f[s0]
        if now == INF:
            out[i] = INF
        elif then == INF:
            out[i] = -INF
        else:
            out[i] = now - then
    return out


def rg_delta(p: NavProblem, traj: Sequence, model: CostModel = UNIFORM) -> np.ndarray:
    """Observation-compliant minus observation-violating optimal cost per goal.

    The compliant plan follows the observed prefix and then plans optimally
    from the last cell. The violating plan is the cheapest path from the
    start that skips at least one observed transition, found by replanning
    with each observed transition removed in turn. Removals only need to be
    tried when every observed transition lies on an optimal path to the goal;
    otherwise the unconstrained optimum already violates the observations.
    """
    m = p.map
    s0, st = traj[0], traj[-1]
    transitions = list(zip(traj[:-1], traj[1:]))
    prefix = path_cost(traj, model)
    from_start = shortest_from(m, s0, model)
    deltas = np.empty(len(p.goals))
    cache: dict = {}
    for i, g in enumerate(p.goals):
        to_goal = cost_field(m, g, model)
        c_obs = prefix + to_goal[st]
        best = from_start[g]
        if not transitions:
            c_not = INF
        elif best == INF:
            c_not = INF
        else:
            tight = []
            for a, b in transitions:
                through = from_start[a] + model.step_cost(a, b) + to_goal[b]
                if through > best + 1e-9 * max(1.0, best):
                    tight = None
                    break
                tight.append((a, b))
            if tight is None:
                c_not = best
            else:
                c_not = INF
                for edge in tight:
                    key = (tuple(edge[0]), tuple(edge[1]))
                    if key not in cache:
                        cache[key] = shortest_from(m, s0, model, banned=edge)
                    c_not = min(c_not, cache[key][g])
        if c_not == INF:
            deltas[i] = -INF if c_obs < INF else INF
        else:
            deltas[i] = c_obs - c_not
    return deltas


def boltzmann_posterior(deltas, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Normalised ``1 / (1 + exp(beta * delta))`` over goals.

    Scores are handled in log space so that large deltas saturate instead of
    overflowing. If every score is zero the posterior falls back to uniform.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    d = np.asarray(deltas, dtype=float)
    with np.errstate(invalid="ignore"):
        log_scores = -np.logaddexp(0.0, beta * d)
    log_scores = np.where(np.isnan(log_scores), -INF, log_scores)
    top = log_scores.max()
    if top == -INF:
        return np.full(len(d), 1.0 / len(d))
    scores = np.exp(log_scores - top)
    return _check_posterior(scores / scores.sum())


def ratio_posterior(p: NavProblem, traj: Sequence, fields: Sequence[CostField],
                    model: CostModel = UNIFORM) -> np.ndarray:
    """Normalised ``c(s_0, g) / (cost of observed prefix + c(s_t, g))``."""
    s0, st = traj[0], traj[-1]
    prefix = path_cost(traj, model)
    scores = np.empty(len(fields))
    for i, f in enumerate(fields):
        optimal, remaining = f[s0], f[st]
        denom = prefix + remaining
        if optimal == INF or remaining == INF:
            scores[i] = 0.0
        elif denom == 0:
            scores[i] = 1.0
        else:
            scores[i] = optimal / denom
    total = scores.sum()
    if total == 0:
        return np.full(len(scores), 1.0 / len(scores))
    return _check_posterior(scores / total)


def ms_recognize(p: NavProblem, traj, fields, beta: float = DEFAULT_BETA) -> np.ndarray:
    return boltzmann_posterior(ms_delta(p, traj, fields), beta)


def rg_recognize(p: NavProblem, traj, model: CostModel = UNIFORM,
                 beta: float = DEFAULT_BETA) -> np.ndarray:
    return boltzmann_posterior(rg_delta(p, traj, model), beta)


def ranking(probs) -> list[int]:
    """Goal indices from most to least likely (stable on ties)."""
    return [int(i) for i in np.argsort(-np.asarray(probs), kind="stable")]


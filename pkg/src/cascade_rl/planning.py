"""Exact planning and policy evaluation on a known cascading MDP.

These are the ground-truth routines used to score learners: they never see
estimates, only the true tables.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .bestperm import best_perm
from .model import CascadeMdp, Policy, row_dot


def exact_value_iteration(mdp: CascadeMdp) -> tuple[np.ndarray, Policy]:
    """Backward induction with the oracle solving each per-state maximization.

    Returns:
        ``(V, policy)`` where ``V`` has shape ``(H+1, S)`` with a zero last row.
    """
    H, S, m = mdp.horizon, mdp.num_states, mdp.max_list_len
    V = np.zeros((H + 1, S))
    items = np.full((H, S, m), -1, dtype=np.int64)
    lengths = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        # weights of every item in every state given the next-step values
        weights = mdp.reward + mdp.transition @ V[h + 1]
        for s in range(S):
            action, value = best_perm(mdp.attraction[s], weights[s], m)
            V[h, s] = value
            items[h, s, : len(action)] = action.items
            lengths[h, s] = len(action)
    return V, Policy(items, lengths)


@njit(cache=True)
def policy_values(q, r, p, pol_items, pol_len, horizon):
    """Bellman evaluation of a fixed policy in its array layout."""
    S = q.shape[0]
    bottom = q.shape[1] - 1
    V = np.zeros((horizon + 1, S))
    for h in range(horizon - 1, -1, -1):
        nxt = V[h + 1]
        for s in range(S):
            total = 0.0
            reach = 1.0
            for i in range(pol_len[h, s]):
                a = pol_items[h, s, i]
                total += reach * q[s, a] * (r[s, a] + row_dot(p[s, a], nxt))
                reach *= 1.0 - q[s, a]
            V[h, s] = total + reach * (r[s, bottom] + row_dot(p[s, bottom], nxt))
    return V


def policy_evaluation(mdp: CascadeMdp, policy: Policy) -> np.ndarray:
    """Value table ``(H+1, S)`` of ``policy`` under the true model."""
    policy.validate(mdp)
    return policy_values(
        mdp.attraction, mdp.reward, mdp.transition, policy.items, policy.lengths, mdp.horizon
    )

"""Comparison learners.

The atomic learners treat every item list as one indivisible action: they
keep statistics per (state, list) and only see the step reward and next
state, never the per-item attraction feedback. The two cascading variants
reuse the cascading learner with the exhaustive oracle or with a bonus that
ignores the attraction variance.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .bestperm import DEFAULT_ENUMERATION_CAP, action_table
from .bonuses import log_terms_kernel
from .cascading_bpi import DEFAULT_EPISODE_CAP, BpiResult
from .cascading_vi import (
    VARIANCE_UNAWARE,
    RegretTrace,
    run_learner,
    run_regret,
)
from .env import make_rng, sample_click
from .model import CascadeMdp, Policy, row_dot


@njit(cache=True)
def _variance(p_row, v):
    mean = 0.0
    second = 0.0
    for j in range(p_row.shape[0]):
        mean += p_row[j] * v[j]
        second += p_row[j] * v[j] * v[j]
    return max(second - mean * mean, 0.0)


@njit(cache=True)
def atomic_vi_bonus(n, p_row, v_up_next, horizon, log_term):
    """Bernstein-style bonus for one (state, list) pair; the horizon when unvisited."""
    if n <= 0:
        return float(horizon)
    var = _variance(p_row, v_up_next)
    val = (
        2.0 * math.sqrt(var * log_term / n)
        + 2.0 * math.sqrt(log_term / n)
        + 5.0 * horizon * log_term / n
    )
    return min(val, float(horizon))


@njit(cache=True)
def atomic_bpi_bonus(n, p_row, v_up_next, v_lo_next, horizon, log_star, log_big):
    if n <= 0:
        return float(horizon)
    var = _variance(p_row, v_up_next)
    gap = 0.0
    for j in range(p_row.shape[0]):
        gap += p_row[j] * (v_up_next[j] - v_lo_next[j])
    val = (
        4.0 * math.sqrt(var * log_star / n)
        + 2.0 * math.sqrt(log_star / n)
        + 15.0 * horizon * horizon * log_big / n
        + 2.0 / horizon * gap
    )
    return min(val, float(horizon))


@njit(cache=True)
def _write_policy(choice, actions, lengths, pol_items, pol_len):
    H, S = choice.shape
    m = pol_items.shape[2]
    for h in range(H):
        for s in range(S):
            c = choice[h, s]
            pol_len[h, s] = lengths[c]
            for i in range(m):
                pol_items[h, s, i] = actions[c, i]


@njit(cache=True)
def atomic_vi_plan_kernel(r_hat, n, p_hat, horizon, log_term, actions, lengths,
                          v_up, choice, pol_items, pol_len):
    """Optimistic backward induction over whole lists; returns Q-entries touched."""
    S, A = n.shape
    v_up[horizon, :] = 0.0
    touched = 0
    for h in range(horizon - 1, -1, -1):
        nxt = v_up[h + 1]
        for s in range(S):
            best = -np.inf
            best_a = 0
            for a in range(A):
                touched += 1
                row = p_hat[s, a]
                q = r_hat[s, a] + row_dot(row, nxt) + atomic_vi_bonus(n[s, a], row, nxt, horizon, log_term)
                if q > best:
                    best = q
                    best_a = a
            v_up[h, s] = min(best, float(horizon))
            choice[h, s] = best_a
    _write_policy(choice, actions, lengths, pol_items, pol_len)
    return touched


@njit(cache=True)
def atomic_bpi_plan_kernel(r_hat, n, p_hat, horizon, log_star, log_big, actions, lengths,
                           v_up, v_lo, g, choice, pol_items, pol_len):
    """Optimistic planning plus pessimistic values and error bounds over whole lists."""
    S, A = n.shape
    H = float(horizon)
    v_up[horizon, :] = 0.0
    v_lo[horizon, :] = 0.0
    g[horizon, :] = 0.0
    for h in range(horizon - 1, -1, -1):
        up_next = v_up[h + 1]
        lo_next = v_lo[h + 1]
        for s in range(S):
            best = -np.inf
            best_a = 0
            best_b = 0.0
            for a in range(A):
                row = p_hat[s, a]
                b = atomic_bpi_bonus(n[s, a], row, up_next, lo_next, horizon, log_star, log_big)
                q = r_hat[s, a] + row_dot(row, up_next) + b
                if q > best:
                    best = q
                    best_a = a
                    best_b = b
            row = p_hat[s, best_a]
            v_up[h, s] = min(best, H)
            v_lo[h, s] = max(r_hat[s, best_a] + row_dot(row, lo_next) - best_b, 0.0)
            g[h, s] = min(2.0 * best_b + row_dot(row, g[h + 1]), H)
            choice[h, s] = best_a
    _write_policy(choice, actions, lengths, pol_items, pol_len)


@njit(cache=True)
def atomic_play_kernel(q, r, p, initial_state, choice, actions, lengths, horizon, rng,
                       n, reward_sum, r_hat, count_p, p_hat):
    """Play one episode; only the step reward and next state reach the estimates."""
    bottom = q.shape[1] - 1
    state = initial_state
    for h in range(horizon):
        c = choice[h, state]
        items = actions[c]
        pos, nxt = sample_click(q, p, state, items, lengths[c], rng)
        clicked = items[pos] if pos < lengths[c] else bottom
        n[state, c] += 1.0
        reward_sum[state, c] += r[state, clicked]
        r_hat[state, c] = reward_sum[state, c] / n[state, c]
        count_p[state, c, nxt] += 1.0
        for j in range(p.shape[2]):
            p_hat[state, c, j] = count_p[state, c, j] / n[state, c]
        state = nxt


@njit(cache=True)
def atomic_bpi_loop_kernel(q, r, p, initial_state, horizon, kappa, epsilon, episode_cap, rng,
                           n, reward_sum, r_hat, count_p, p_hat, actions, lengths,
                           v_up, v_lo, g, choice, pol_items, pol_len):
    S, A = n.shape
    for k in range(1, episode_cap + 1):
        log_star, log_big = log_terms_kernel(kappa, k, S, horizon, A)
        atomic_bpi_plan_kernel(r_hat, n, p_hat, horizon, log_star, log_big, actions, lengths,
                               v_up, v_lo, g, choice, pol_items, pol_len)
        if g[0, initial_state] <= epsilon:
            return k, True
        if k == episode_cap:
            break
        atomic_play_kernel(q, r, p, initial_state, choice, actions, lengths, horizon, rng,
                           n, reward_sum, r_hat, count_p, p_hat)
    return episode_cap, False


@dataclass
class AtomicEstimatorState:
    """Per (state, list) statistics; list indices follow ``enumerate_actions``.

    Unvisited pairs read as reward 0 and a uniform next-state distribution.
    """

    n: np.ndarray
    reward_sum: np.ndarray
    r_hat: np.ndarray
    count_p: np.ndarray
    p_hat: np.ndarray

    @classmethod
    def empty(cls, num_states: int, num_actions: int) -> AtomicEstimatorState:
        S, A = num_states, num_actions
        return cls(
            n=np.zeros((S, A)),
            reward_sum=np.zeros((S, A)),
            r_hat=np.zeros((S, A)),
            count_p=np.zeros((S, A, S)),
            p_hat=np.full((S, A, S), 1.0 / S),
        )

    @property
    def num_entries(self) -> int:
        return sum(arr.size for arr in (self.n, self.reward_sum, self.r_hat, self.count_p, self.p_hat))


class _AtomicBase:
    def __init__(self, mdp: CascadeMdp, cap: int):
        self.mdp = mdp
        self.actions, self.lengths = action_table(mdp.num_items, mdp.max_list_len, cap)
        self.num_actions = self.actions.shape[0]
        self.estimates = AtomicEstimatorState.empty(mdp.num_states, self.num_actions)
        H, S, m = mdp.horizon, mdp.num_states, mdp.max_list_len
        self.choice = np.zeros((H, S), dtype=np.int64)
        self.pol_items = np.full((H, S, m), -1, dtype=np.int64)
        self.pol_len = np.ones((H, S), dtype=np.int64)

    @property
    def policy_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.pol_items, self.pol_len

    def warm_up(self) -> None:
        self.plan(1)
        scratch = AtomicEstimatorState(*(np.array(a) for a in (
            self.estimates.n, self.estimates.reward_sum, self.estimates.r_hat,
            self.estimates.count_p, self.estimates.p_hat)))
        self.play(make_rng(0, "warm-up"), scratch)

    def play(self, rng: np.random.Generator, estimates: AtomicEstimatorState | None = None) -> None:
        est = self.estimates if estimates is None else estimates
        mdp = self.mdp
        atomic_play_kernel(
            mdp.attraction, mdp.reward, mdp.transition, mdp.initial_state, self.choice,
            self.actions, self.lengths, mdp.horizon, rng,
            est.n, est.reward_sum, est.r_hat, est.count_p, est.p_hat,
        )


class AdaptVI(_AtomicBase):
    """Optimistic value iteration over whole lists."""

    def __init__(self, mdp: CascadeMdp, episodes: int, delta: float, cap: int = DEFAULT_ENUMERATION_CAP):
        if not 0.0 < delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        if episodes < 1:
            raise ValueError(f"need at least one episode, got {episodes}")
        super().__init__(mdp, cap)
        H, S = mdp.horizon, mdp.num_states
        self.log_term = math.log(episodes * H * S * self.num_actions / (delta / 14.0))
        self.v_up = np.zeros((H + 1, S))

    def plan(self, k: int) -> int:
        """Plan for episode ``k``; returns the number of Q-entries touched."""
        est = self.estimates
        return atomic_vi_plan_kernel(
            est.r_hat, est.n, est.p_hat, self.mdp.horizon, self.log_term,
            self.actions, self.lengths, self.v_up, self.choice, self.pol_items, self.pol_len,
        )

    @property
    def upper_value(self) -> float:
        return float(self.v_up[0, self.mdp.initial_state])


def adapt_vi_run(mdp: CascadeMdp, episodes: int, delta: float, seed: int,
                 cap: int = DEFAULT_ENUMERATION_CAP) -> RegretTrace:
    """Regret run of the atomic-action learner.

    Raises:
        EnumerationCapError: If the list space exceeds ``cap``.
    """
    learner = AdaptVI(mdp, episodes, delta, cap)
    return run_learner(learner, mdp, episodes, seed, "adapt-vi")


def cascading_vi_oracle_run(mdp: CascadeMdp, episodes: int, delta: float, seed: int) -> RegretTrace:
    """The cascading learner planning with exhaustive search instead of the DP."""
    return run_regret(mdp, episodes, delta, seed, oracle="brute-force")


def cascading_vi_bonus_run(mdp: CascadeMdp, episodes: int, delta: float, seed: int) -> RegretTrace:
    """The cascading learner with an attraction bonus blind to the variance."""
    return run_regret(mdp, episodes, delta, seed, variant=VARIANCE_UNAWARE)


def adapt_bpi_run(mdp: CascadeMdp, epsilon: float, delta: float, seed: int,
                  episode_cap: int = DEFAULT_EPISODE_CAP, cap: int = DEFAULT_ENUMERATION_CAP) -> BpiResult:
    """Atomic-action identification with the same stopping rule, kappa = delta / 7."""
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if episode_cap < 1:
        raise ValueError(f"episode_cap must be at least 1, got {episode_cap}")
    base = _AtomicBase(mdp, cap)
    est = base.estimates
    H, S = mdp.horizon, mdp.num_states
    v_up = np.zeros((H + 1, S))
    v_lo = np.zeros((H + 1, S))
    g = np.zeros((H + 1, S))
    args = (
        mdp.attraction, mdp.reward, mdp.transition, mdp.initial_state, H, delta / 7.0,
        float(epsilon),
    )
    state = (
        est.n, est.reward_sum, est.r_hat, est.count_p, est.p_hat, base.actions, base.lengths,
        v_up, v_lo, g, base.choice, base.pol_items, base.pol_len,
    )
    # a one-pass call compiles the loop; it plans once and never plays
    atomic_bpi_loop_kernel(*args, 1, make_rng(0, "warm-up"), *state)
    rng = make_rng(seed, "env")
    t0 = time.perf_counter()
    used, terminated = atomic_bpi_loop_kernel(*args, int(episode_cap), rng, *state)
    elapsed = (time.perf_counter() - t0) * 1e3
    return BpiResult(
        algorithm="adapt-bpi",
        seed=seed,
        policy=Policy(base.pol_items.copy(), base.pol_len.copy()),
        episodes_used=int(used),
        terminated=bool(terminated),
        final_error=float(g[0, mdp.initial_state]),
        wallclock_ms=elapsed,
    )

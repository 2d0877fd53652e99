"""Best-policy identification for cascading MDPs.

The learner plans exactly like the regret learner (with wider, episode-
dependent bonuses), then bounds how far its optimistic value can sit above
the value of the greedy policy. Once that bound drops to ``epsilon`` at the
initial state it stops and returns the greedy policy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .bonuses import bpi_bonus_pv, bpi_bonus_q, log_terms, log_terms_kernel
from .cascading_vi import (
    BPI,
    EstimatorState,
    PlanBuffers,
    PlanConfig,
    PlanResult,
    oracle_tables,
    plan_into,
    plan_kernel,
    play_episode_kernel,
)
from .env import make_rng
from .model import CascadeMdp, Policy, row_dot
from .planning import exact_value_iteration, policy_evaluation

__all__ = [
    "BpiResult",
    "CascadingBPI",
    "ErrorBoundTable",
    "bpi_bonus_pv",
    "bpi_bonus_q",
    "compute_error_bound",
    "log_terms",
    "policy_gap",
    "run_bpi",
]

DEFAULT_EPISODE_CAP = 10**6


@njit(cache=True)
def error_bound_kernel(q_hat, n_q, p_hat, n_p, horizon, log_star, log_big,
                       bonuses_on, v_up, v_lo, pol_items, pol_len, g):
    """Backward recursion for the estimation error along the greedy lists."""
    S, N = q_hat.shape
    H = float(horizon)
    g[horizon, :] = 0.0
    for h in range(horizon - 1, -1, -1):
        for s in range(S):
            n = pol_len[h, s]
            total = 0.0
            reach = 1.0
            for i in range(n + 1):
                a = pol_items[h, s, i] if i < n else N
                b_q = 0.0
                b_pv = 0.0
                row = p_hat[s, a]
                if bonuses_on:
                    if a < N:
                        b_q = bpi_bonus_q(n_q[s, a], q_hat[s, a], log_star)
                    b_pv = bpi_bonus_pv(n_p[s, a], row, v_up[h + 1], v_lo[h + 1], horizon, log_star, log_big)
                if a < N:
                    q_up = min(q_hat[s, a] + b_q, 1.0)
                    q_lo = max(q_hat[s, a] - b_q, 0.0)
                else:
                    q_up = 1.0
                    q_lo = 1.0
                total += reach * (6.0 * H * b_q + q_lo * (2.0 * b_pv + row_dot(row, g[h + 1])))
                reach *= 1.0 - q_up
            g[h, s] = min(total, H)


@njit(cache=True)
def bpi_loop_kernel(
    q, p, initial_state, reward, horizon, m, kappa, epsilon, episode_cap, rng,
    n_q, sum_q, q_hat, n_p, count_p, p_hat,
    use_brute, actions, lengths, v_up, v_lo, g, pol_items, pol_len,
):
    """Plan, bound, stop or play until the bound is small or the cap is hit.

    Returns ``(episodes_used, terminated)``.
    """
    S, N = q_hat.shape
    for k in range(1, episode_cap + 1):
        log_star, log_big = log_terms_kernel(kappa, k, S, horizon, N)
        plan_kernel(q_hat, n_q, p_hat, n_p, reward, horizon, m, BPI, log_star, log_big,
                    True, use_brute, actions, lengths, v_up, v_lo, pol_items, pol_len)
        error_bound_kernel(q_hat, n_q, p_hat, n_p, horizon, log_star, log_big,
                           True, v_up, v_lo, pol_items, pol_len, g)
        if g[0, initial_state] <= epsilon:
            return k, True
        if k == episode_cap:
            break
        play_episode_kernel(q, p, initial_state, pol_items, pol_len, horizon, rng,
                            n_q, sum_q, q_hat, n_p, count_p, p_hat)
    return episode_cap, False


@dataclass(frozen=True)
class ErrorBoundTable:
    """Estimation-error bounds, shape ``(H+1, S)`` with a zero last row."""

    g: np.ndarray

    def at(self, h: int, s: int) -> float:
        return float(self.g[h, s])


@dataclass(frozen=True)
class BpiResult:
    algorithm: str
    seed: int
    policy: Policy
    episodes_used: int
    terminated: bool
    final_error: float
    wallclock_ms: float


def bpi_config(mdp: CascadeMdp, delta: float, oracle: str = "bestperm", bonuses: bool = True) -> PlanConfig:
    """Planning configuration with kappa = delta / 7."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return PlanConfig(
        reward=np.array(mdp.reward), horizon=mdp.horizon, max_list_len=mdp.max_list_len,
        variant=BPI, oracle=oracle, bonuses=bonuses, kappa=delta / 7.0,
    )


def compute_error_bound(estimates: EstimatorState, plan: PlanResult, k: int, config: PlanConfig) -> ErrorBoundTable:
    """Error bounds for the plan produced at episode ``k`` from ``estimates``."""
    S, N = estimates.q_hat.shape
    log_star, log_big = config.logs(k, S, N)
    g = np.zeros_like(plan.v_upper)
    error_bound_kernel(
        estimates.q_hat, estimates.n_q, estimates.p_hat, estimates.n_p, config.horizon,
        log_star, log_big, config.bonuses, plan.v_upper, plan.v_lower,
        plan.policy.items, plan.policy.lengths, g,
    )
    return ErrorBoundTable(g)


def policy_gap(mdp: CascadeMdp, policy: Policy) -> float:
    """V*_1(s_1) - V^policy_1(s_1) by exact evaluation."""
    v_star, _ = exact_value_iteration(mdp)
    values = policy_evaluation(mdp, policy)
    s0 = mdp.initial_state
    return float(v_star[0, s0] - values[0, s0])


class CascadingBPI:
    """Step-by-step driver of the identification loop, for inspection.

    ``run_bpi`` executes the same steps inside one compiled loop.
    """

    def __init__(self, mdp: CascadeMdp, delta: float, oracle: str = "bestperm"):
        self.mdp = mdp
        self.config = bpi_config(mdp, delta, oracle)
        self.estimates = EstimatorState.empty(mdp.num_states, mdp.num_items)
        self._buf = PlanBuffers(mdp.horizon, mdp.num_states, mdp.max_list_len)

    def plan(self, k: int) -> tuple[PlanResult, ErrorBoundTable]:
        calls = plan_into(self.estimates, k, self.config, self._buf)
        buf = self._buf
        result = PlanResult(
            v_upper=buf.v_up.copy(), v_lower=buf.v_lo.copy(),
            policy=Policy(buf.pol_items, buf.pol_len), oracle_calls=calls,
        )
        return result, compute_error_bound(self.estimates, result, k, self.config)

    def play(self, rng: np.random.Generator) -> None:
        est, mdp, buf = self.estimates, self.mdp, self._buf
        play_episode_kernel(
            mdp.attraction, mdp.transition, mdp.initial_state, buf.pol_items, buf.pol_len,
            mdp.horizon, rng, est.n_q, est.sum_q, est.q_hat, est.n_p, est.count_p, est.p_hat,
        )


def run_bpi(mdp: CascadeMdp, epsilon: float, delta: float, seed: int,
            episode_cap: int = DEFAULT_EPISODE_CAP, oracle: str = "bestperm") -> BpiResult:
    """Identify an ``epsilon``-good policy, playing at most ``episode_cap - 1`` episodes.

    ``episodes_used`` is the index of the last planning pass, so stopping
    before any play reports 1.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if episode_cap < 1:
        raise ValueError(f"episode_cap must be at least 1, got {episode_cap}")
    config = bpi_config(mdp, delta, oracle)
    est = EstimatorState.empty(mdp.num_states, mdp.num_items)
    buf = PlanBuffers(mdp.horizon, mdp.num_states, mdp.max_list_len)
    g = np.zeros((mdp.horizon + 1, mdp.num_states))
    actions, lengths = oracle_tables(oracle, mdp.num_items, mdp.max_list_len)
    args = (
        mdp.attraction, mdp.transition, mdp.initial_state, config.reward, mdp.horizon,
        mdp.max_list_len, config.kappa, float(epsilon),
    )
    state = (
        est.n_q, est.sum_q, est.q_hat, est.n_p, est.count_p, est.p_hat,
        oracle == "brute-force", actions, lengths, buf.v_up, buf.v_lo, g, buf.pol_items, buf.pol_len,
    )
    # a one-pass call compiles the loop; it plans once and never plays
    bpi_loop_kernel(*args, 1, make_rng(0, "warm-up"), *state)
    rng = make_rng(seed, "env")
    t0 = time.perf_counter()
    used, terminated = bpi_loop_kernel(*args, int(episode_cap), rng, *state)
    elapsed = (time.perf_counter() - t0) * 1e3
    return BpiResult(
        algorithm="cascading-bpi" if oracle == "bestperm" else "cascading-bpi-oracle",
        seed=seed,
        policy=Policy(buf.pol_items.copy(), buf.pol_len.copy()),
        episodes_used=int(used),
        terminated=bool(terminated),
        final_error=float(g[0, mdp.initial_state]),
        wallclock_ms=elapsed,
    )

"""Optimistic value iteration for cascading MDPs with variance-aware bonuses.

Estimates are kept per (state, item), never per item list. Every episode the
learner plans backwards: it inflates attraction estimates and the expected
continuation value by exploration bonuses, asks the oracle for the best list
in each state, derives a pessimistic companion value, then plays the greedy
policy once and folds the cascade feedback into its counts.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bestperm import best_perm_kernel, brute_force_kernel, action_table
from .bonuses import bonus_pv, bonus_q, bonus_q_unaware, bpi_bonus_pv, bpi_bonus_q, log_terms
from .env import make_rng, sample_click
from .model import CascadeMdp, Policy, row_dot
from .planning import exact_value_iteration, policy_values

# planning variants understood by ``plan_kernel``
VARIANCE_AWARE = 0
VARIANCE_UNAWARE = 1
BPI = 2

ORACLES = ("bestperm", "brute-force")


@njit(cache=True)
def plan_kernel(
    q_hat, n_q, p_hat, n_p, reward, horizon, m, variant, log_a, log_b,
    bonuses_on, use_brute, actions, lengths, v_up, v_lo, pol_items, pol_len,
):
    """One backward planning pass; fills the output tables in place.

    ``log_a`` is the log term of the regret variants (or L* for BPI) and
    ``log_b`` is BPI's L. Returns the number of oracle calls.
    """
    S, N = q_hat.shape
    u_up = np.empty(N + 1)
    u_lo = np.empty(N + 1)
    w_up = np.empty(N + 1)
    w_lo = np.empty(N + 1)
    out = np.empty(m, dtype=np.int64)
    v_up[horizon, :] = 0.0
    v_lo[horizon, :] = 0.0
    calls = 0
    for h in range(horizon - 1, -1, -1):
        up_next = v_up[h + 1]
        lo_next = v_lo[h + 1]
        for s in range(S):
            for a in range(N):
                b = 0.0
                if bonuses_on:
                    if variant == VARIANCE_AWARE:
                        b = bonus_q(n_q[s, a], q_hat[s, a], log_a)
                    elif variant == VARIANCE_UNAWARE:
                        b = bonus_q_unaware(n_q[s, a], log_a)
                    else:
                        b = bpi_bonus_q(n_q[s, a], q_hat[s, a], log_a)
                u_up[a] = min(max(q_hat[s, a] + b, 0.0), 1.0)
                u_lo[a] = min(max(q_hat[s, a] - b, 0.0), 1.0)
            u_up[N] = 1.0
            u_lo[N] = 1.0
            for a in range(N + 1):
                row = p_hat[s, a]
                b = 0.0
                if bonuses_on:
                    if variant == BPI:
                        b = bpi_bonus_pv(n_p[s, a], row, up_next, lo_next, horizon, log_a, log_b)
                    else:
                        b = bonus_pv(n_p[s, a], row, up_next, lo_next, horizon, log_a)
                w_up[a] = reward[s, a] + row_dot(row, up_next) + b
                w_lo[a] = reward[s, a] + row_dot(row, lo_next) - b

            if use_brute:
                length, value, _ = brute_force_kernel(u_up, w_up, actions, lengths, out)
            else:
                length, value, _ = best_perm_kernel(u_up, w_up, m, out)
            calls += 1
            v_up[h, s] = min(value, float(horizon))
            pol_len[h, s] = length
            for i in range(m):
                pol_items[h, s, i] = out[i] if i < length else -1

            lower = 0.0
            reach = 1.0
            for i in range(length + 1):
                a = out[i] if i < length else N
                lower += reach * u_lo[a] * w_lo[a]
                reach *= 1.0 - u_up[a]
            v_lo[h, s] = max(lower, 0.0)
    return calls


@njit(cache=True)
def play_episode_kernel(
    q, p, initial_state, pol_items, pol_len, horizon, rng,
    n_q, sum_q, q_hat, n_p, count_p, p_hat,
):
    """Play one episode under the true model and record the cascade feedback."""
    bottom = q.shape[1] - 1
    state = initial_state
    for h in range(horizon):
        n = pol_len[h, state]
        items = pol_items[h, state]
        pos, nxt = sample_click(q, p, state, items, n, rng)
        last = pos if pos < n else n - 1
        for i in range(last + 1):
            a = items[i]
            n_q[state, a] += 1.0
            if i == pos:
                sum_q[state, a] += 1.0
            q_hat[state, a] = sum_q[state, a] / n_q[state, a]
        c = items[pos] if pos < n else bottom
        n_p[state, c] += 1.0
        count_p[state, c, nxt] += 1.0
        for j in range(p.shape[2]):
            p_hat[state, c, j] = count_p[state, c, j] / n_p[state, c]
        state = nxt


@dataclass
class EstimatorState:
    """Per (state, item) visit counts and empirical means.

    Counts are stored as floats so tests can load exact model parameters
    through ``from_model``. Unvisited pairs read as attraction 0 and a
    uniform next-state distribution.
    """

    n_q: np.ndarray
    sum_q: np.ndarray
    q_hat: np.ndarray
    n_p: np.ndarray
    count_p: np.ndarray
    p_hat: np.ndarray

    @classmethod
    def empty(cls, num_states: int, num_items: int) -> EstimatorState:
        S, N = num_states, num_items
        return cls(
            n_q=np.zeros((S, N)),
            sum_q=np.zeros((S, N)),
            q_hat=np.zeros((S, N)),
            n_p=np.zeros((S, N + 1)),
            count_p=np.zeros((S, N + 1, S)),
            p_hat=np.full((S, N + 1, S), 1.0 / S),
        )

    @classmethod
    def from_model(cls, mdp: CascadeMdp) -> EstimatorState:
        """Estimates equal to the true model, one pseudo-observation each."""
        S, N = mdp.num_states, mdp.num_items
        q = np.array(mdp.attraction[:, :N])
        p = np.array(mdp.transition)
        return cls(
            n_q=np.ones((S, N)),
            sum_q=q.copy(),
            q_hat=q,
            n_p=np.ones((S, N + 1)),
            count_p=p.copy(),
            p_hat=p,
        )

    @property
    def num_entries(self) -> int:
        return sum(arr.size for arr in (self.n_q, self.sum_q, self.q_hat, self.n_p, self.count_p, self.p_hat))

    def copy(self) -> EstimatorState:
        return EstimatorState(*(np.array(arr) for arr in (
            self.n_q, self.sum_q, self.q_hat, self.n_p, self.count_p, self.p_hat)))


@dataclass(frozen=True)
class PlanConfig:
    """Everything planning needs besides the estimates.

    ``log_term`` is the fixed L of the regret learners. The identification
    variant ignores it and derives its log terms from ``kappa`` and the
    episode index. ``bonuses=False`` zeroes every bonus, a test hook that
    turns planning into plain value iteration on the estimates.
    """

    reward: np.ndarray
    horizon: int
    max_list_len: int
    log_term: float = 1.0
    variant: int = VARIANCE_AWARE
    oracle: str = "bestperm"
    bonuses: bool = True
    kappa: float | None = None

    def __post_init__(self) -> None:
        if self.oracle not in ORACLES:
            raise ValueError(f"unknown oracle {self.oracle!r}; choose from {ORACLES}")
        if self.variant == BPI and self.kappa is None:
            raise ValueError("the identification variant needs kappa")

    def logs(self, k: int, num_states: int, num_items: int) -> tuple[float, float]:
        if self.variant == BPI:
            return log_terms(self.kappa, k, num_states, self.horizon, num_items)
        return self.log_term, 0.0


@dataclass(frozen=True)
class PlanResult:
    v_upper: np.ndarray
    v_lower: np.ndarray
    policy: Policy
    oracle_calls: int


class PlanBuffers:
    """Output tables reused across episodes to keep the loop allocation-free."""

    def __init__(self, horizon: int, num_states: int, max_list_len: int):
        H, S, m = horizon, num_states, max_list_len
        self.v_up = np.zeros((H + 1, S))
        self.v_lo = np.zeros((H + 1, S))
        self.pol_items = np.full((H, S, m), -1, dtype=np.int64)
        self.pol_len = np.ones((H, S), dtype=np.int64)


_NO_ACTIONS = (np.zeros((0, 1), dtype=np.int64), np.zeros(0, dtype=np.int64))


def oracle_tables(oracle: str, num_items: int, max_list_len: int):
    """Action table for the exhaustive oracle, empty placeholders otherwise."""
    if oracle == "brute-force":
        return action_table(num_items, max_list_len)
    return _NO_ACTIONS


def plan_into(est: EstimatorState, k: int, config: PlanConfig, buf: PlanBuffers) -> int:
    """Plan into preallocated buffers; returns the number of oracle calls."""
    S, N = est.q_hat.shape
    log_a, log_b = config.logs(k, S, N)
    actions, lengths = oracle_tables(config.oracle, N, config.max_list_len)
    return plan_kernel(
        est.q_hat, est.n_q, est.p_hat, est.n_p, config.reward, config.horizon,
        config.max_list_len, config.variant, log_a, log_b,
        config.bonuses, config.oracle == "brute-force", actions, lengths,
        buf.v_up, buf.v_lo, buf.pol_items, buf.pol_len,
    )


def plan(estimates: EstimatorState, k: int, config: PlanConfig) -> PlanResult:
    """Optimistic and pessimistic values plus the greedy policy for episode ``k``."""
    buf = PlanBuffers(config.horizon, estimates.q_hat.shape[0], config.max_list_len)
    calls = plan_into(estimates, k, config, buf)
    return PlanResult(
        v_upper=buf.v_up,
        v_lower=buf.v_lo,
        policy=Policy(buf.pol_items, buf.pol_len),
        oracle_calls=calls,
    )


def regret_log_term(episodes: int, horizon: int, num_states: int, num_items: int, delta: float) -> float:
    """L = log(K H S N / delta') with delta' = delta / 14."""
    return math.log(episodes * horizon * num_states * num_items / (delta / 14.0))


@dataclass
class RegretTrace:
    """Per-episode scoring of a regret run.

    ``optimistic_value`` is the planner's upper value at the initial state,
    kept for optimism diagnostics. ``oracle_calls`` counts oracle invocations
    per episode (Q-entries touched, for atomic learners).
    """

    algorithm: str
    seed: int
    inst_regret: np.ndarray
    wallclock_ms: np.ndarray
    optimistic_value: np.ndarray
    oracle_calls: np.ndarray
    optimal_value: float
    cum_regret: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.cum_regret = np.cumsum(self.inst_regret)

    @property
    def episodes(self) -> int:
        return int(self.inst_regret.shape[0])

    def rows(self):
        for k in range(self.episodes):
            yield (
                self.algorithm, self.seed, k + 1, float(self.inst_regret[k]),
                float(self.cum_regret[k]), float(self.wallclock_ms[k]),
            )


class CascadingVI:
    """Stateful learner; ``plan`` then ``play`` once per episode."""

    def __init__(self, mdp: CascadeMdp, episodes: int, delta: float,
                 variant: int = VARIANCE_AWARE, oracle: str = "bestperm"):
        if not 0.0 < delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        if episodes < 1:
            raise ValueError(f"need at least one episode, got {episodes}")
        self.mdp = mdp
        self.estimates = EstimatorState.empty(mdp.num_states, mdp.num_items)
        log_term = regret_log_term(episodes, mdp.horizon, mdp.num_states, mdp.num_items, delta)
        self.config = PlanConfig(
            reward=np.array(mdp.reward), horizon=mdp.horizon, max_list_len=mdp.max_list_len,
            log_term=log_term, variant=variant, oracle=oracle,
        )
        self._buf = PlanBuffers(mdp.horizon, mdp.num_states, mdp.max_list_len)

    def plan(self, k: int) -> int:
        """Refresh the policy for episode ``k``; returns the oracle call count."""
        return plan_into(self.estimates, k, self.config, self._buf)

    @property
    def policy_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self._buf.pol_items, self._buf.pol_len

    @property
    def upper_value(self) -> float:
        return float(self._buf.v_up[0, self.mdp.initial_state])

    def snapshot(self) -> PlanResult:
        buf = self._buf
        return PlanResult(
            v_upper=buf.v_up.copy(), v_lower=buf.v_lo.copy(),
            policy=Policy(buf.pol_items, buf.pol_len), oracle_calls=0,
        )

    def play(self, rng: np.random.Generator, estimates: EstimatorState | None = None) -> None:
        est = self.estimates if estimates is None else estimates
        mdp = self.mdp
        play_episode_kernel(
            mdp.attraction, mdp.transition, mdp.initial_state,
            self._buf.pol_items, self._buf.pol_len, mdp.horizon, rng,
            est.n_q, est.sum_q, est.q_hat, est.n_p, est.count_p, est.p_hat,
        )

    def warm_up(self) -> None:
        """Compile the kernels without touching the learner's state."""
        self.plan(1)
        self.play(make_rng(0, "warm-up"), self.estimates.copy())


def run_learner(learner, mdp: CascadeMdp, episodes: int, seed: int, name: str) -> RegretTrace:
    """Shared regret loop: plan, play, then score the played policy exactly.

    Wall-clock covers planning and playing only; compilation happens in a
    warm-up beforehand.
    """
    rng = make_rng(seed, "env")
    v_star, _ = exact_value_iteration(mdp)
    best = float(v_star[0, mdp.initial_state])
    inst = np.empty(episodes)
    clock = np.empty(episodes)
    upper = np.empty(episodes)
    calls = np.empty(episodes, dtype=np.int64)
    s0, H = mdp.initial_state, mdp.horizon
    learner.warm_up()
    for k in range(episodes):
        t0 = time.perf_counter()
        calls[k] = learner.plan(k + 1)
        items, lengths = learner.policy_arrays
        upper[k] = learner.upper_value
        learner.play(rng)
        clock[k] = (time.perf_counter() - t0) * 1e3
        values = policy_values(mdp.attraction, mdp.reward, mdp.transition, items, lengths, H)
        inst[k] = best - values[0, s0]
    return RegretTrace(
        algorithm=name, seed=seed, inst_regret=inst, wallclock_ms=clock,
        optimistic_value=upper, oracle_calls=calls, optimal_value=best,
    )


def run_regret(mdp: CascadeMdp, episodes: int, delta: float, seed: int,
               variant: int = VARIANCE_AWARE, oracle: str = "bestperm") -> RegretTrace:
    """Run the cascading learner for ``episodes`` episodes and score each one."""
    names = {
        (VARIANCE_AWARE, "bestperm"): "cascading-vi",
        (VARIANCE_AWARE, "brute-force"): "cascading-vi-oracle",
        (VARIANCE_UNAWARE, "bestperm"): "cascading-vi-bonus",
    }
    if (variant, oracle) not in names:
        raise ValueError(f"unsupported combination variant={variant}, oracle={oracle!r}")
    learner = CascadingVI(mdp, episodes, delta, variant=variant, oracle=oracle)
    return run_learner(learner, mdp, episodes, seed, names[(variant, oracle)])

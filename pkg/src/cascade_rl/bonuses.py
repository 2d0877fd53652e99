"""Exploration bonuses shared by the cascading learners.

Every bonus is capped: attraction bonuses at 1 and value bonuses at the
horizon. A pair that was never observed receives the cap.
"""

import math

from numba import njit


@njit(cache=True)
def bonus_q(n, q_hat, log_term):
    """Attraction bonus, capped at 1; an unvisited pair gets the cap."""
    if n <= 0:
        return 1.0
    var = q_hat * (1.0 - q_hat)
    return min(2.0 * math.sqrt(var * log_term / n) + 5.0 * log_term / n, 1.0)


@njit(cache=True)
def bonus_q_unaware(n, log_term):
    """Attraction bonus that ignores the empirical Bernoulli variance."""
    if n <= 0:
        return 1.0
    return min(2.0 * math.sqrt(log_term / n) + 5.0 * log_term / n, 1.0)


@njit(cache=True)
def _moments(p_row, v_up, v_lo):
    mean = 0.0
    second = 0.0
    gap_sq = 0.0
    for j in range(p_row.shape[0]):
        mean += p_row[j] * v_up[j]
        second += p_row[j] * v_up[j] * v_up[j]
        gap = v_up[j] - v_lo[j]
        gap_sq += p_row[j] * gap * gap
    return max(second - mean * mean, 0.0), gap_sq


@njit(cache=True)
def bonus_pv(n, p_row, v_up_next, v_lo_next, horizon, log_term):
    """Bonus on the expected next-step value, capped at the horizon."""
    if n <= 0:
        return float(horizon)
    var, gap_sq = _moments(p_row, v_up_next, v_lo_next)
    val = (
        2.0 * math.sqrt(var * log_term / n)
        + 2.0 * math.sqrt(gap_sq * log_term / n)
        + 5.0 * horizon * log_term / n
    )
    return min(val, float(horizon))


@njit(cache=True)
def bpi_bonus_q(n, q_hat, log_star):
    if n <= 0:
        return 1.0
    var = q_hat * (1.0 - q_hat)
    return min(4.0 * math.sqrt(var * log_star / n) + 15.0 * log_star / n, 1.0)


@njit(cache=True)
def bpi_bonus_pv(n, p_row, v_up_next, v_lo_next, horizon, log_star, log_big):
    if n <= 0:
        return float(horizon)
    var, _ = _moments(p_row, v_up_next, v_lo_next)
    gap = 0.0
    for j in range(p_row.shape[0]):
        gap += p_row[j] * (v_up_next[j] - v_lo_next[j])
    val = (
        4.0 * math.sqrt(var * log_star / n)
        + 15.0 * horizon * horizon * log_big / n
        + 2.0 / horizon * gap
    )
    return min(val, float(horizon))


@njit(cache=True)
def log_terms_kernel(kappa, n, num_states, horizon, num_items):
    base = math.log(horizon * num_states * num_items / kappa)
    growth = math.log(8.0 * math.e * (n + 1))
    return base + growth, base + num_states * growth


def log_terms(kappa: float, n: int, num_states: int, horizon: int, num_items: int) -> tuple[float, float]:
    """Episode-dependent log factors ``(L*, L)`` of the identification bonuses.

    ``num_items`` is the size of whatever the learner counts per state: regular
    items for the cascading learner, whole lists for atomic ones.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    if n < 1:
        raise ValueError(f"episode index must be at least 1, got {n}")
    return log_terms_kernel(kappa, n, num_states, horizon, num_items)

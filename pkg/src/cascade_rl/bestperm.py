"""Exact maximization of the weighted cascade objective over item lists.

``best_perm`` is the O(Nm + N log N) dynamic program: sort by weight, keep
only items whose weight beats the terminator's, then pick the best ``m`` of
those with a take/skip recursion over the sorted order. The brute-force
oracle evaluates every legal list and is used as a reference and as the
planner of the exhaustive-search baseline.

Tie rules (shared by both oracles so their outputs can be compared list for
list):

* weight ties in the sort go to the lower item index;
* an item whose weight equals the terminator's is treated as below it;
* in the DP, a tie between skipping and taking an item skips it;
* values within ``TIE_TOL`` (relative) of each other count as tied;
* with no item above the terminator, the lowest-index best single item wins.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np
from numba import njit

from .model import Action, CascadeError, action_space_size, cascade_value

NEG_SENTINEL = -np.finfo(np.float64).max
DEFAULT_ENUMERATION_CAP = 10**7
TIE_TOL = 1e-13


class EmptyGroundSetError(CascadeError, ValueError):
    """Raised when the oracle is asked to choose from zero regular items."""


class EnumerationCapError(CascadeError, RuntimeError):
    """Raised when exhaustive enumeration would exceed the configured cap."""

    def __init__(self, size: int, cap: int):
        super().__init__(f"action space has {size} lists, above the enumeration cap {cap}")
        self.size = size
        self.cap = cap


@dataclass(frozen=True)
class DpWorkspace:
    """Intermediate tables of one ``best_perm`` call, kept for inspection.

    Row ``i`` of ``value_table`` / ``choice_table`` refers to ``sorted_items[i]``
    (0-based), column ``k`` to the number of items still to pick. Cells that
    cannot be filled hold ``NEG_SENTINEL``. Both tables are empty unless the
    DP branch ran (more items above the terminator than the cap allows).
    The terminator's position in the weight order is ``num_above``.
    """

    sorted_items: np.ndarray
    num_above: int
    value_table: np.ndarray
    choice_table: np.ndarray
    cell_updates: int


@njit(cache=True)
def _sort_by_weight(w):
    n = w.shape[0] - 1
    # stable insertion sort by descending weight; ground sets are small
    order = np.empty(n, dtype=np.int64)
    for a in range(n):
        j = a
        while j > 0 and w[order[j - 1]] < w[a]:
            order[j] = order[j - 1]
            j -= 1
        order[j] = a
    above = 0
    for a in range(n):
        if w[a] > w[n]:
            above += 1
    return order, above


@njit(cache=True)
def _dp_fill(u, w, order, above, m, F, take):
    """Fill the take/skip tables; returns the number of cells evaluated."""
    w_bot = w[w.shape[0] - 1]
    for i in range(above):
        F[i, 0] = w_bot
        for k in range(1, m + 1):
            F[i, k] = NEG_SENTINEL
            take[i, k] = False
    last = order[above - 1]
    F[above - 1, 1] = u[last] * w[last] + (1.0 - u[last]) * w_bot
    take[above - 1, 1] = True
    updates = 1
    for i in range(above - 2, -1, -1):
        a = order[i]
        for k in range(1, min(m, above - i) + 1):
            updates += 1
            with_item = u[a] * w[a] + (1.0 - u[a]) * F[i + 1, k - 1]
            skip = F[i + 1, k]
            # near-ties count as ties so rounding noise cannot flip the choice
            if skip >= with_item - TIE_TOL * max(1.0, abs(skip)):
                F[i, k] = F[i + 1, k]
            else:
                F[i, k] = with_item
                take[i, k] = True
    return updates


@njit(cache=True)
def best_perm_kernel(u, w, m, out):
    """Jitted oracle. Writes the chosen items into ``out``.

    Returns ``(length, value, cell_updates)``.
    """
    n = u.shape[0] - 1
    w_bot = w[n]
    order, above = _sort_by_weight(w)
    if above == 0:
        best_val = NEG_SENTINEL
        for a in range(n):
            out[0] = a
            best_val = max(best_val, cascade_value(u, w, out, 1))
        tol = TIE_TOL * max(1.0, abs(best_val))
        for a in range(n):
            out[0] = a
            val = cascade_value(u, w, out, 1)
            if val >= best_val - tol:
                return 1, val, 0
        return 1, best_val, 0
    if above <= m:
        for i in range(above):
            out[i] = order[i]
        return above, cascade_value(u, w, out, above), 0

    F = np.empty((above, m + 1))
    take = np.zeros((above, m + 1), dtype=np.bool_)
    updates = _dp_fill(u, w, order, above, m, F, take)
    k = m
    i = 0
    filled = 0
    while k > 0:
        if take[i, k]:
            out[filled] = order[i]
            filled += 1
            k -= 1
        i += 1
    return m, cascade_value(u, w, out, m), updates


@njit(cache=True)
def brute_force_kernel(u, w, actions, lengths, out):
    """Evaluate every row of ``actions`` and pick the tie-compatible maximizer.

    Returns ``(length, value, evaluated)``.
    """
    num_actions = actions.shape[0]
    values = np.empty(num_actions)
    best_val = NEG_SENTINEL
    best_idx = 0
    for i in range(num_actions):
        values[i] = cascade_value(u, w, actions[i], lengths[i])
        if values[i] > best_val:
            best_val = values[i]
            best_idx = i

    n = u.shape[0] - 1
    order, above = _sort_by_weight(w)
    rank = np.empty(n, dtype=np.int64)
    for r in range(n):
        rank[order[r]] = r
    tol = TIE_TOL * max(1.0, abs(best_val))
    keep = np.empty(num_actions, dtype=np.bool_)
    for i in range(num_actions):
        keep[i] = values[i] >= best_val - tol

    chosen = -1
    if above == 0:
        # lowest-index best single item
        lowest = n
        for i in range(num_actions):
            if keep[i] and lengths[i] == 1 and actions[i, 0] < lowest:
                lowest = actions[i, 0]
                chosen = i
    else:
        # canonical lists: min(m, J) items above the terminator, in sorted order
        target = min(actions.shape[1], above)
        any_kept = False
        for i in range(num_actions):
            if not keep[i]:
                continue
            ok = lengths[i] == target
            prev = -1
            for j in range(lengths[i]):
                r = rank[actions[i, j]]
                if r >= above or r <= prev:
                    ok = False
                    break
                prev = r
            keep[i] = ok
            any_kept = any_kept or ok
        if any_kept:
            # mirror the DP's reconstruction: per position, best suffix value
            # first, then the latest sorted rank (skip preference)
            for j in range(target):
                if j > 0:
                    suffix_best = NEG_SENTINEL
                    suffix = np.empty(num_actions)
                    for i in range(num_actions):
                        if keep[i]:
                            suffix[i] = cascade_value(u, w, actions[i, j:], target - j)
                            if suffix[i] > suffix_best:
                                suffix_best = suffix[i]
                    stol = TIE_TOL * max(1.0, abs(suffix_best))
                    for i in range(num_actions):
                        if keep[i] and suffix[i] < suffix_best - stol:
                            keep[i] = False
                latest = -1
                for i in range(num_actions):
                    if keep[i] and rank[actions[i, j]] > latest:
                        latest = rank[actions[i, j]]
                for i in range(num_actions):
                    if keep[i] and rank[actions[i, j]] != latest:
                        keep[i] = False
            for i in range(num_actions):
                if keep[i]:
                    chosen = i
                    break
    if chosen < 0:
        chosen = best_idx
    length = lengths[chosen]
    for j in range(length):
        out[j] = actions[chosen, j]
    return length, values[chosen], num_actions


def _validate_inputs(u, w, m: int) -> tuple[np.ndarray, np.ndarray]:
    u = np.ascontiguousarray(u, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if u.ndim != 1 or u.shape != w.shape:
        raise ValueError("u and w must be 1-D vectors of equal length")
    if u.shape[0] < 2:
        raise EmptyGroundSetError("the ground set has no regular item")
    if m < 1:
        raise ValueError(f"list cap m must be at least 1, got {m}")
    if u[-1] != 1.0:
        raise ValueError("the terminator must have click probability 1")
    if np.any((u < 0) | (u > 1)) or not np.all(np.isfinite(w)):
        raise ValueError("u must lie in [0, 1] and w must be finite")
    return u, w


def best_perm(u, w, m: int) -> tuple[Action, float]:
    """Return the item list maximizing the cascade objective and its value.

    Args:
        u: Click probabilities for the N regular items followed by the
            terminator (whose entry must be 1).
        w: Weights in the same layout.
        m: Maximum list length.
    """
    u, w = _validate_inputs(u, w, m)
    out = np.empty(min(m, u.shape[0] - 1), dtype=np.int64)
    length, value, _ = best_perm_kernel(u, w, out.shape[0], out)
    return Action(tuple(out[:length])), float(value)


def best_perm_workspace(u, w, m: int) -> DpWorkspace:
    """Run the sort and the DP and hand back the tables."""
    u, w = _validate_inputs(u, w, m)
    m = min(m, u.shape[0] - 1)
    order, above = _sort_by_weight(w)
    if above > m:
        F = np.empty((above, m + 1))
        take = np.zeros((above, m + 1), dtype=bool)
        updates = _dp_fill(u, w, order, above, m, F, take)
    else:
        F = np.empty((0, m + 1))
        take = np.zeros((0, m + 1), dtype=bool)
        updates = 0
    return DpWorkspace(
        sorted_items=order,
        num_above=int(above),
        value_table=F,
        choice_table=take,
        cell_updates=int(updates),
    )


def enumerate_actions(num_items: int, max_list_len: int) -> Iterator[Action]:
    """Yield every legal list once: shorter lists first, then lexicographic."""
    if not 1 <= max_list_len <= num_items:
        raise ValueError(f"need 1 <= m <= N, got N={num_items}, m={max_list_len}")
    for k in range(1, max_list_len + 1):
        for items in itertools.permutations(range(num_items), k):
            yield Action(items)


@lru_cache(maxsize=32)
def action_table(num_items: int, max_list_len: int, cap: int = DEFAULT_ENUMERATION_CAP) -> tuple[np.ndarray, np.ndarray]:
    """All legal lists as a ``(|A|, m)`` array padded with -1, plus lengths.

    Rows follow ``enumerate_actions`` order. The arrays are read-only.
    """
    size = action_space_size(num_items, max_list_len)
    if size > cap:
        raise EnumerationCapError(size, cap)
    items = np.full((size, max_list_len), -1, dtype=np.int64)
    lengths = np.empty(size, dtype=np.int64)
    row = 0
    for k in range(1, max_list_len + 1):
        for perm in itertools.permutations(range(num_items), k):
            items[row, :k] = perm
            lengths[row] = k
            row += 1
    items.setflags(write=False)
    lengths.setflags(write=False)
    return items, lengths


def brute_force_best_perm(u, w, m: int, cap: int = DEFAULT_ENUMERATION_CAP) -> tuple[Action, float]:
    """Exhaustive-search counterpart of ``best_perm`` with the same tie rules.

    Raises:
        EnumerationCapError: If the number of legal lists exceeds ``cap``.
    """
    action, value, _ = brute_force_best_perm_counted(u, w, m, cap)
    return action, value


def brute_force_best_perm_counted(u, w, m: int, cap: int = DEFAULT_ENUMERATION_CAP) -> tuple[Action, float, int]:
    """Like ``brute_force_best_perm`` but also reports how many lists were scored."""
    u, w = _validate_inputs(u, w, m)
    n = u.shape[0] - 1
    m = min(m, n)
    items, lengths = action_table(n, m, cap)
    out = np.empty(m, dtype=np.int64)
    length, value, evaluated = brute_force_kernel(u, w, items, lengths, out)
    return Action(tuple(out[:length])), float(value), int(evaluated)

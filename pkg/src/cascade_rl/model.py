"""Cascading MDP data model and the weighted cascade objective.

Items are dense integer indices ``0..N-1``; the virtual terminator item
(clicked when no regular item attracts the user) always carries index ``N``.
Steps are 0-based in code: step ``h`` runs from ``0`` to ``H - 1`` and value
tables carry an extra terminal row ``H`` fixed at zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

STOCHASTIC_TOL = 1e-9
INT64_MAX = 2**63 - 1


class CascadeError(Exception):
    """Base class for errors raised by this package."""


class InvalidActionError(CascadeError, ValueError):
    """An item list is empty, too long, repeats an item or names a bad index."""


class InvalidModelError(CascadeError, ValueError):
    """A cascading MDP violates one of its table invariants."""


@dataclass(frozen=True)
class Action:
    """Ordered list of distinct regular items.

    The terminator item is implicit: it sits after the last stored item and
    is never part of ``items``.
    """

    items: tuple[int, ...]

    def __post_init__(self) -> None:
        items = tuple(int(a) for a in self.items)
        object.__setattr__(self, "items", items)
        if not items:
            raise InvalidActionError("an action needs at least one regular item")
        if len(set(items)) != len(items):
            raise InvalidActionError(f"duplicate items in action {items}")
        if min(items) < 0:
            raise InvalidActionError(f"negative item index in action {items}")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i: int) -> int:
        return self.items[i]

    def validate(self, num_items: int, max_list_len: int | None = None) -> None:
        if max(self.items) >= num_items:
            raise InvalidActionError(
                f"action {self.items} references an item outside 0..{num_items - 1}"
            )
        if max_list_len is not None and len(self.items) > max_list_len:
            raise InvalidActionError(
                f"action {self.items} is longer than the cap m={max_list_len}"
            )


def as_action(action: Action | Sequence[int]) -> Action:
    return action if isinstance(action, Action) else Action(tuple(action))


@dataclass(frozen=True, eq=False)
class CascadeMdp:
    """Episodic cascading MDP.

    Attributes:
        num_states: Number of states ``S``.
        num_items: Number of regular items ``N``; the terminator has index ``N``.
        max_list_len: Cardinality cap ``m`` on recommended lists.
        horizon: Episode length ``H``.
        initial_state: Index of the fixed start state.
        attraction: ``(S, N+1)`` click probabilities; terminator column is 1.
        reward: ``(S, N+1)`` click rewards in [0, 1]; terminator column is 0.
        transition: ``(S, N+1, S)`` next-state distributions, indexed by the
            clicked item.
    """

    num_states: int
    num_items: int
    max_list_len: int
    horizon: int
    initial_state: int
    attraction: np.ndarray
    reward: np.ndarray
    transition: np.ndarray

    def __post_init__(self) -> None:
        S, N, m, H = self.num_states, self.num_items, self.max_list_len, self.horizon
        if S < 1 or N < 1 or H < 1:
            raise InvalidModelError("num_states, num_items and horizon must be positive")
        if not 1 <= m <= N:
            raise InvalidModelError(f"max_list_len must lie in 1..{N}, got {m}")
        if not 0 <= self.initial_state < S:
            raise InvalidModelError(f"initial_state {self.initial_state} out of range")

        q = _frozen_array(self.attraction, (S, N + 1), "attraction")
        r = _frozen_array(self.reward, (S, N + 1), "reward")
        p = _frozen_array(self.transition, (S, N + 1, S), "transition")
        if np.any((q < 0) | (q > 1)):
            raise InvalidModelError("attraction probabilities must lie in [0, 1]")
        if np.any((r < 0) | (r > 1)):
            raise InvalidModelError("rewards must lie in [0, 1]")
        if np.any(q[:, N] != 1.0):
            raise InvalidModelError("terminator attraction column must be all ones")
        if np.any(r[:, N] != 0.0):
            raise InvalidModelError("terminator reward column must be all zeros")
        if np.any(p < 0):
            raise InvalidModelError("transition probabilities must be nonnegative")
        row_sums = p.sum(axis=2)
        bad = np.argwhere(np.abs(row_sums - 1.0) > STOCHASTIC_TOL)
        if bad.size:
            s, a = bad[0]
            raise InvalidModelError(
                f"transition row (s={s}, a={a}) sums to {row_sums[s, a]!r}, not 1"
            )
        object.__setattr__(self, "attraction", q)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "transition", p)

    @property
    def bottom(self) -> int:
        """Index of the terminator item."""
        return self.num_items

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_items": self.num_items,
            "max_list_len": self.max_list_len,
            "horizon": self.horizon,
            "initial_state": self.initial_state,
            "attraction": self.attraction.tolist(),
            "reward": self.reward.tolist(),
            "transition": self.transition.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> CascadeMdp:
        try:
            return cls(
                num_states=int(doc["num_states"]),
                num_items=int(doc["num_items"]),
                max_list_len=int(doc["max_list_len"]),
                horizon=int(doc["horizon"]),
                initial_state=int(doc["initial_state"]),
                attraction=np.asarray(doc["attraction"], dtype=np.float64),
                reward=np.asarray(doc["reward"], dtype=np.float64),
                transition=np.asarray(doc["transition"], dtype=np.float64),
            )
        except KeyError as exc:
            raise InvalidModelError(f"missing field {exc.args[0]!r}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> CascadeMdp:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _frozen_array(values, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.shape != shape:
        raise InvalidModelError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidModelError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


class Policy:
    """Deterministic non-stationary policy: one action per (step, state).

    Stored as an ``(H, S, m)`` item table padded with ``-1`` plus an
    ``(H, S)`` table of list lengths, which is the layout the jitted
    evaluators consume.
    """

    def __init__(self, items: np.ndarray, lengths: np.ndarray):
        items = np.array(items, dtype=np.int64)
        lengths = np.array(lengths, dtype=np.int64)
        if items.ndim != 3 or lengths.shape != items.shape[:2]:
            raise ValueError("items must be (H, S, m) and lengths (H, S)")
        if np.any(lengths < 1) or np.any(lengths > items.shape[2]):
            raise InvalidActionError("every list length must lie in 1..m")
        items.setflags(write=False)
        lengths.setflags(write=False)
        self.items = items
        self.lengths = lengths

    @classmethod
    def from_actions(cls, table: Sequence[Sequence[Action | Sequence[int]]], max_list_len: int) -> Policy:
        H, S = len(table), len(table[0])
        items = np.full((H, S, max_list_len), -1, dtype=np.int64)
        lengths = np.zeros((H, S), dtype=np.int64)
        for h in range(H):
            for s in range(S):
                act = as_action(table[h][s])
                if len(act) > max_list_len:
                    raise InvalidActionError(f"action {act.items} longer than m={max_list_len}")
                items[h, s, : len(act)] = act.items
                lengths[h, s] = len(act)
        return cls(items, lengths)

    @classmethod
    def constant(cls, action: Action | Sequence[int], horizon: int, num_states: int, max_list_len: int) -> Policy:
        act = as_action(action)
        return cls.from_actions([[act] * num_states for _ in range(horizon)], max_list_len)

    @property
    def horizon(self) -> int:
        return self.items.shape[0]

    @property
    def num_states(self) -> int:
        return self.items.shape[1]

    def action(self, h: int, s: int) -> Action:
        return Action(tuple(self.items[h, s, : self.lengths[h, s]]))

    def validate(self, mdp: CascadeMdp) -> None:
        if (self.horizon, self.num_states) != (mdp.horizon, mdp.num_states):
            raise InvalidActionError("policy shape does not match the MDP")
        for h in range(self.horizon):
            for s in range(self.num_states):
                self.action(h, s).validate(mdp.num_items, mdp.max_list_len)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Policy):
            return NotImplemented
        return bool(np.array_equal(self.lengths, other.lengths)) and all(
            self.action(h, s) == other.action(h, s)
            for h in range(self.horizon)
            for s in range(self.num_states)
        )

    def __repr__(self) -> str:
        return f"Policy(horizon={self.horizon}, num_states={self.num_states})"


@njit(cache=True)
def row_dot(x, y):
    """Dot product of two short vectors without the BLAS call overhead."""
    acc = 0.0
    for j in range(x.shape[0]):
        acc += x[j] * y[j]
    return acc


@njit(cache=True)
def cascade_value(u, w, items, n):
    """Weighted cascade objective of ``items[:n]`` followed by the terminator.

    ``u`` and ``w`` are indexed by item; their last entry is the terminator.
    """
    bottom = u.shape[0] - 1
    total = 0.0
    reach = 1.0
    for i in range(n):
        a = items[i]
        total += reach * u[a] * w[a]
        reach *= 1.0 - u[a]
    return total + reach * u[bottom] * w[bottom]


def _check_item_vector(vec, name: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise ValueError(f"{name} must be a 1-D vector over N regular items plus the terminator")
    return arr


def eval_f(action: Action | Sequence[int], u, w) -> float:
    """Expected weight collected by a cascade over ``action`` then the terminator.

    Args:
        action: Regular items in display order.
        u: Per-item click probabilities, terminator last (must equal 1).
        w: Per-item weights, terminator last.

    Raises:
        InvalidActionError: On duplicate or out-of-range items.
    """
    u = _check_item_vector(u, "u")
    w = _check_item_vector(w, "w")
    if u.shape != w.shape:
        raise ValueError("u and w must have the same length")
    if u[-1] != 1.0:
        raise ValueError("the terminator must have click probability 1")
    act = as_action(action)
    act.validate(u.shape[0] - 1)
    items = np.asarray(act.items, dtype=np.int64)
    return float(cascade_value(u, w, items, items.shape[0]))


def click_distribution(action: Action | Sequence[int], q_row) -> np.ndarray:
    """Probability that each position is the clicked one.

    The returned vector has ``len(action) + 1`` entries; the last one is the
    terminator and absorbs all remaining mass.
    """
    q_row = _check_item_vector(q_row, "q_row")
    if q_row[-1] != 1.0:
        raise ValueError("the terminator must have click probability 1")
    act = as_action(action)
    act.validate(q_row.shape[0] - 1)
    probs = np.empty(len(act) + 1)
    reach = 1.0
    for i, a in enumerate(act.items):
        probs[i] = reach * q_row[a]
        reach *= 1.0 - q_row[a]
    probs[-1] = reach
    return probs


def action_space_size(num_items: int, max_list_len: int) -> int:
    """Number of legal item lists: sum over lengths k of N!/(N-k)!.

    Raises:
        OverflowError: If the count does not fit a signed 64-bit integer.
    """
    if not 1 <= max_list_len <= num_items:
        raise ValueError(f"need 1 <= m <= N, got N={num_items}, m={max_list_len}")
    total = sum(math.perm(num_items, k) for k in range(1, max_list_len + 1))
    if total > INT64_MAX:
        raise OverflowError(
            f"action space for N={num_items}, m={max_list_len} exceeds 64-bit range"
        )
    return total


"""Benchmark instances: the layered synthetic MDP and ratings-derived MDPs."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .model import CascadeError, CascadeMdp

MISSING_ATTRACTION = 0.1
RATINGS_HEADER = ("user_id", "item_id", "rating")


class RatingsFormatError(CascadeError, ValueError):
    """A ratings file row could not be parsed."""


class InsufficientDataError(CascadeError, ValueError):
    """Fewer distinct users or items than the requested MDP size."""


@dataclass(frozen=True)
class RatingRecord:
    user_id: int
    item_id: int
    rating: float


def synthetic_layer(state: int) -> int:
    """1-based layer of a state in the synthetic instance."""
    return 1 if state == 0 else (state + 1) // 2 + 1


def synthetic_good_items(num_items: int, max_list_len: int) -> tuple[int, ...]:
    return tuple(range(num_items - max_list_len, num_items))


def build_synthetic(horizon: int, num_items: int, max_list_len: int) -> CascadeMdp:
    """Layered instance where the last ``m`` items steer towards rewarding states.

    State 0 is the lone first-layer state; layer ``h >= 2`` holds a good state
    ``2h - 3`` (reward 1) and a bad state ``2h - 2`` (reward 0). Every regular
    item attracts with probability 1/2. Clicking a good item moves to the next
    layer's good state w.p. 0.9, a bad item or no click w.p. 0.1. Last-layer
    states loop onto themselves so every transition row is a distribution.
    """
    H, N, m = horizon, num_items, max_list_len
    if H < 2:
        raise ValueError(f"horizon must be at least 2, got {H}")
    if not 1 <= m < N:
        raise ValueError(f"need 1 <= list length < items, got m={m}, N={N}")
    S = 2 * H - 1
    good = set(synthetic_good_items(N, m))

    attraction = np.full((S, N + 1), 0.5)
    attraction[:, N] = 1.0
    state_reward = np.array([1.0 if s % 2 == 1 else 0.0 for s in range(S)])
    reward = np.repeat(state_reward[:, None], N + 1, axis=1)
    reward[:, N] = 0.0

    transition = np.zeros((S, N + 1, S))
    for s in range(S):
        layer = synthetic_layer(s)
        if layer == H:
            transition[s, :, s] = 1.0
            continue
        next_good, next_bad = 2 * layer - 1, 2 * layer
        for a in range(N + 1):
            p_good = 0.9 if a in good else 0.1
            transition[s, a, next_good] = p_good
            transition[s, a, next_bad] = 1.0 - p_good
    return CascadeMdp(
        num_states=S,
        num_items=N,
        max_list_len=m,
        horizon=H,
        initial_state=0,
        attraction=attraction,
        reward=reward,
        transition=transition,
    )


def ingest_ratings_file(path: str | Path) -> list[RatingRecord]:
    """Parse ``user_id,item_id,rating`` rows; a repeated pair keeps its last rating.

    Raises:
        OSError: If the file cannot be read.
        RatingsFormatError: On a malformed row, with its 1-based line number.
    """
    records: dict[tuple[int, int], RatingRecord] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and tuple(c.strip() for c in row) == RATINGS_HEADER:
                continue
            if len(row) != 3:
                raise RatingsFormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                user, item, rating = int(row[0]), int(row[1]), float(row[2])
            except ValueError:
                raise RatingsFormatError(f"{path}:{lineno}: cannot parse {row!r}") from None
            if not 0.0 <= rating <= 5.0:
                raise RatingsFormatError(f"{path}:{lineno}: rating {rating} outside [0, 5]")
            records.pop((user, item), None)
            records[(user, item)] = RatingRecord(user, item, rating)
    return list(records.values())


def _most_frequent(ids: Iterable[int], k: int) -> list[int]:
    counts = Counter(ids)
    return sorted(counts, key=lambda i: (-counts[i], i))[:k]


def build_from_ratings(
    ratings: Iterable[RatingRecord],
    num_states: int,
    num_items: int,
    like_threshold: float = 4.5,
    self_loop: float = 0.9,
    horizon: int = 3,
    max_list_len: int = 3,
) -> CascadeMdp:
    """Users become states and items become items.

    The ``num_states`` most active users and ``num_items`` most rated items are
    kept (ties to the smaller id), ordered by activity; the busiest user is
    the initial state. Attraction is rating / 5, or ``MISSING_ATTRACTION``
    when the pair is unrated. Every click pays 1. A rating at or above
    ``like_threshold`` keeps the user with probability ``self_loop`` and
    spreads the rest evenly; other pairs, unrated pairs and the no-click item
    move to a uniformly random user.
    """
    records = list(ratings)
    S, N = num_states, num_items
    if S < 1 or N < 1:
        raise ValueError("num_states and num_items must be positive")
    users = _most_frequent((r.user_id for r in records), S)
    items = _most_frequent((r.item_id for r in records), N)
    if len(users) < S or len(items) < N:
        raise InsufficientDataError(
            f"need {S} users and {N} items, data has {len(users)} and {len(items)}"
        )
    user_idx = {u: i for i, u in enumerate(users)}
    item_idx = {a: i for i, a in enumerate(items)}

    attraction = np.full((S, N + 1), MISSING_ATTRACTION)
    attraction[:, N] = 1.0
    reward = np.ones((S, N + 1))
    reward[:, N] = 0.0
    transition = np.full((S, N + 1, S), 1.0 / S)

    liked_row = np.full(S, (1.0 - self_loop) / (S - 1)) if S > 1 else np.ones(1)
    for rec in records:
        s, a = user_idx.get(rec.user_id), item_idx.get(rec.item_id)
        if s is None or a is None:
            continue
        attraction[s, a] = rec.rating / 5.0
        if rec.rating >= like_threshold:
            row = liked_row.copy()
            if S > 1:
                row[s] = self_loop
            transition[s, a] = row
    return CascadeMdp(
        num_states=S,
        num_items=N,
        max_list_len=max_list_len,
        horizon=horizon,
        initial_state=0,
        attraction=attraction,
        reward=reward,
        transition=transition,
    )

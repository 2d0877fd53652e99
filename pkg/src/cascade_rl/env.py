"""Episode simulator with cascade feedback.

The user scans the list top-down; each examined item attracts independently
with its attraction probability and the first attractive one is clicked.
Items after the click are never examined, so no randomness is drawn for
them. One uniform is consumed per examined item (in list order) and one for
the transition, always from the caller's generator.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import Action, CascadeMdp, Policy, as_action


def make_rng(seed: int, stream: str = "env") -> np.random.Generator:
    """Counter-based generator for one (replication seed, purpose) pair."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(stream.encode()),))
    return np.random.Generator(np.random.Philox(seq))


@njit(cache=True)
def sample_index(probs, u):
    """Inverse-CDF draw from a probability row given one uniform."""
    acc = 0.0
    last = 0
    for j in range(probs.shape[0]):
        if probs[j] > 0.0:
            last = j
            acc += probs[j]
            if u < acc:
                return j
    return last


@njit(cache=True)
def sample_click(q, p, state, items, n, rng):
    """Simulate one step; returns ``(clicked_position, next_state)``.

    ``clicked_position == n`` means the terminator was clicked.
    """
    pos = n
    for i in range(n):
        if rng.random() < q[state, items[i]]:
            pos = i
            break
    item = items[pos] if pos < n else q.shape[1] - 1
    nxt = sample_index(p[state, item], rng.random())
    return pos, nxt


@dataclass(frozen=True)
class ClickOutcome:
    """Feedback of one step.

    ``clicked_position`` is 0-based; the value ``len(action)`` stands for the
    terminator. ``observed_attractions`` lists ``(item, attracted)`` for every
    examined regular item, i.e. the positions up to and including the click.
    """

    clicked_position: int
    clicked_item: int
    observed_attractions: tuple[tuple[int, bool], ...]
    reward: float
    next_state: int


@dataclass(frozen=True)
class StepRecord:
    state: int
    action: Action
    outcome: ClickOutcome


@dataclass(frozen=True)
class EpisodeTrajectory:
    records: tuple[StepRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    @property
    def total_reward(self) -> float:
        return sum(rec.outcome.reward for rec in self.records)


def step(mdp: CascadeMdp, state: int, action: Action, rng: np.random.Generator) -> ClickOutcome:
    act = as_action(action)
    act.validate(mdp.num_items, mdp.max_list_len)
    items = np.asarray(act.items, dtype=np.int64)
    pos, nxt = sample_click(mdp.attraction, mdp.transition, state, items, len(act), rng)
    clicked = act.items[pos] if pos < len(act) else mdp.bottom
    observed = tuple((a, i == pos) for i, a in enumerate(act.items[: pos + 1]))
    return ClickOutcome(
        clicked_position=int(pos),
        clicked_item=clicked,
        observed_attractions=observed,
        reward=float(mdp.reward[state, clicked]),
        next_state=int(nxt),
    )


def run_episode(mdp: CascadeMdp, policy: Policy, rng: np.random.Generator) -> EpisodeTrajectory:
    state = mdp.initial_state
    records = []
    for h in range(mdp.horizon):
        action = policy.action(h, state)
        outcome = step(mdp, state, action, rng)
        records.append(StepRecord(state, action, outcome))
        state = outcome.next_state
    return EpisodeTrajectory(tuple(records))

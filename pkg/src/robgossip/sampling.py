"""Identifier exchange: the history-aware sampler (HaPS) and the BASALT-style baseline.

Both samplers fill slots by per-slot hash argmin. HaPS ranks over the whole
history a node has ever seen; the baseline only over what it currently
holds plus what arrived this round.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .graph import NodeState, fresh_seeds, select_view


class SamplerKind(str, Enum):
    HAPS = "haps"
    BASALT = "basalt"


@dataclass(frozen=True)
class PushMessage:
    sender: int
    target: int
    ids: tuple[int, ...]


@dataclass(frozen=True)
class PullResponse:
    responder: int
    requester: int
    ids: tuple[int, ...]


@dataclass(frozen=True)
class SeedRefreshPolicy:
    interval: int = 1
    seeds_per_refresh: int = 10

    def __post_init__(self):
        if self.interval < 1:
            raise ValueError("seed refresh interval must be >= 1")
        if self.seeds_per_refresh < 0:
            raise ValueError("seeds_per_refresh must be >= 0")


def pick_targets(node: NodeState) -> tuple[int, int]:
    """One push target and one pull target, uniform over the current view."""
    push = int(node.view[node.rng.integers(len(node.view))])
    pull = int(node.view[node.rng.integers(len(node.view))])
    return push, pull


def _incoming_ids(inbox_push: Iterable[PushMessage], inbox_pull: Iterable[PullResponse]) -> list[int]:
    ids: list[int] = []
    for m in inbox_push:
        ids.extend(m.ids)
    for r in inbox_pull:
        ids.extend(r.ids)
    return ids


def absorb(node: NodeState, inbox_push: Iterable[PushMessage], inbox_pull: Iterable[PullResponse]) -> int:
    """Union received ids into the history; returns the number of new ids."""
    return node.history.update(_incoming_ids(inbox_push, inbox_pull))


def refresh_seeds(node: NodeState, t: int, policy: SeedRefreshPolicy) -> list[int]:
    """Re-seed ``seeds_per_refresh`` random slots when ``t`` is on the interval.

    Returns the refreshed slot indices (empty off-interval).
    """
    if t % policy.interval != 0 or policy.seeds_per_refresh == 0:
        return []
    k = min(policy.seeds_per_refresh, node.v)
    slots = np.sort(node.rng.choice(node.v, size=k, replace=False))
    node.seeds[slots] = fresh_seeds(node.rng, k)
    return [int(s) for s in slots]


def honest_round(
    node: NodeState,
    inbox_push: Iterable[PushMessage],
    inbox_pull: Iterable[PullResponse],
    t: int | None = None,
    policy: SeedRefreshPolicy | None = None,
) -> NodeState:
    """History update, optional seed refresh, then view re-selection (in place)."""
    absorb(node, inbox_push, inbox_pull)
    if policy is not None and t is not None:
        refresh_seeds(node, t, policy)
    node.reselect()
    return node


def basalt_schedule(v: int, rho: float) -> tuple[int, int]:
    """(interval in rounds, slots reset per event) for reset rate ``rho``."""
    interval = max(1, int(round(v / rho)))
    per_event = min(v, max(1, int(round(rho * v))))
    return interval, per_event


def basalt_round(
    node: NodeState,
    inbox_push: Iterable[PushMessage],
    inbox_pull: Iterable[PullResponse],
    t: int,
    rho: float = 0.25,
) -> NodeState:
    """History-less slot update over current occupants plus this round's arrivals."""
    interval, per_event = basalt_schedule(node.v, rho)
    if t > 0 and t % interval == 0:
        slots = (node.next_reset_slot + np.arange(per_event)) % node.v
        node.seeds[slots] = fresh_seeds(node.rng, per_event)
        node.next_reset_slot = int((node.next_reset_slot + per_event) % node.v)
    # occupants first so an incumbent keeps its slot on an exact score tie
    pool = [int(x) for x in node.view] + _incoming_ids(inbox_push, inbox_pull)
    pool = list(dict.fromkeys(pool))
    node.view = select_view(pool, node.seeds, node.node_id)
    node.history.update(pool)
    return node

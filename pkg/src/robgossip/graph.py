"""Node identities, histories, hash ranking and view selection.

Every node owns one 64-bit seed per view slot. A slot is filled with the
candidate of smallest keyed-hash score under that slot's seed, so a view is
a set of ``v`` independent min-wise samples of the candidate pool.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyHistoryError

MASK64 = (1 << 64) - 1
_SLOT_MUL = 0x9E3779B97F4A7C15
_CAND_MUL = 0xD1B54A32D192ED03
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def rank(seed: int, slot: int, candidate: int) -> int:
    """Score of ``candidate`` for ``slot`` keyed by ``seed`` (unsigned 64-bit)."""
    key = _mix(seed ^ (((slot + 1) * _SLOT_MUL) & MASK64))
    return _mix(key ^ (((candidate + 1) * _CAND_MUL) & MASK64))


def _mix_np(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def rank_matrix(seeds: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rank`: returns scores of shape ``(len(seeds), len(candidates))``.

    Slot ``k`` is the position of the seed in ``seeds``.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    cands = np.asarray(candidates, dtype=np.uint64)
    slots = np.arange(1, len(seeds) + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        keys = _mix_np(seeds ^ (slots * np.uint64(_SLOT_MUL)))
        c = (cands + np.uint64(1)) * np.uint64(_CAND_MUL)
        return _mix_np(keys[:, None] ^ c[None, :])


def fresh_seeds(rng: np.random.Generator, k: int) -> np.ndarray:
    return rng.integers(0, 2**64, size=k, dtype=np.uint64, endpoint=False)


@dataclass
class History:
    """Identifiers seen by a node, in first-seen order. Never shrinks."""

    owner: int
    ids: list[int] = field(default_factory=list)
    _known: set[int] = field(default_factory=set, repr=False)
    _arr: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_ids(cls, owner: int, ids: Iterable[int]) -> "History":
        h = cls(owner)
        h.update(ids)
        return h

    def update(self, ids: Iterable[int]) -> int:
        """Add unseen ids (self excluded); returns how many were new."""
        added = 0
        for i in ids:
            i = int(i)
            if i != self.owner and i not in self._known:
                self._known.add(i)
                self.ids.append(i)
                added += 1
        if added:
            self._arr = None
        return added

    def __contains__(self, i: int) -> bool:
        return i in self._known

    def __len__(self) -> int:
        return len(self.ids)

    def as_array(self) -> np.ndarray:
        if self._arr is None:
            self._arr = np.asarray(self.ids, dtype=np.int64)
        return self._arr

    def copy(self) -> "History":
        return History(self.owner, list(self.ids), set(self._known), self._arr)


def select_view(candidates: Sequence[int] | np.ndarray, seeds: np.ndarray, self_id: int) -> np.ndarray:
    """Per-slot argmin of the hash score over ``candidates`` minus ``self_id``.

    ``candidates`` must be in insertion order: on equal scores the earliest
    candidate wins (``np.argmin`` returns the first minimum).
    """
    cands = np.asarray(candidates, dtype=np.int64)
    cands = cands[cands != self_id]
    if cands.size == 0:
        raise EmptyHistoryError(f"node {self_id} has no candidate besides itself")
    scores = rank_matrix(seeds, cands)
    return cands[np.argmin(scores, axis=1)]


@dataclass
class NodeState:
    node_id: int
    byzantine: bool
    history: History
    seeds: np.ndarray
    view: np.ndarray
    rng: np.random.Generator
    model: np.ndarray | None = None
    momentum: np.ndarray | None = None
    # BasaltBaseline round-robin pointer over slots
    next_reset_slot: int = 0

    @property
    def v(self) -> int:
        return len(self.seeds)

    def reselect(self) -> None:
        self.view = select_view(self.history.as_array(), self.seeds, self.node_id)


@dataclass
class RoundGraph:
    """Directed out-link graph at one round: row ``i`` of ``views`` is node i's view."""

    round: int
    views: np.ndarray
    byzantine: np.ndarray

    @property
    def n(self) -> int:
        return self.views.shape[0]

    @property
    def honest(self) -> np.ndarray:
        return np.flatnonzero(~self.byzantine)

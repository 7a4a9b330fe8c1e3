"""Byzantine behaviour: identifier flooding and colluding model poisoning."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .aggregation import AggregatorKind
from .sampling import PushMessage

DEFAULT_ZETA_GRID = tuple(2.0**k for k in range(-4, 5))


class AttackKind(str, Enum):
    NONE = "none"
    FOE = "foe"
    ALIE = "alie"


def parse_force(value) -> float:
    """Flooding force: a positive integer, or ``inf``/``"inf"`` for unlimited."""
    if isinstance(value, str) and value.strip().lower() in {"inf", "infinity", "∞"}:
        return math.inf
    f = float(value)
    if math.isinf(f) and f > 0:
        return math.inf
    if f < 1 or f != int(f):
        raise ValueError(f"flood force must be a positive integer or inf, got {value!r}")
    return float(int(f))


def flood_round(byz_id: int, honest_neighbors: Sequence[int], force: float, byz_ids: Sequence[int],
                v: int, rng: np.random.Generator) -> list[PushMessage]:
    """Pushes of ``v`` Byzantine ids (drawn with replacement) to ``min(F, |neighbors|)`` honest nodes."""
    honest_neighbors = list(dict.fromkeys(int(h) for h in honest_neighbors))
    if not honest_neighbors or not len(byz_ids):
        return []
    if math.isinf(force) or force >= len(honest_neighbors):
        targets = honest_neighbors
    else:
        idx = rng.choice(len(honest_neighbors), size=int(force), replace=False)
        targets = [honest_neighbors[i] for i in np.sort(idx)]
    pool = np.asarray(byz_ids, dtype=np.int64)
    return [PushMessage(byz_id, t, tuple(int(x) for x in rng.choice(pool, size=v, replace=True)))
            for t in targets]


def byzantine_ids_reply(byz_ids: Sequence[int], v: int, rng: np.random.Generator) -> tuple[int, ...]:
    pool = np.asarray(byz_ids, dtype=np.int64)
    return tuple(int(x) for x in rng.choice(pool, size=v, replace=True))


@dataclass(frozen=True)
class CollusionOracle:
    """Statistics of this round's honest models, shared by all Byzantine nodes."""

    honest_mean: np.ndarray
    honest_std: np.ndarray

    @classmethod
    def from_models(cls, honest_models: np.ndarray) -> "CollusionOracle":
        honest_models = np.asarray(honest_models, dtype=np.float64)
        # population std: the adversary sees every honest model
        return cls(honest_models.mean(axis=0), honest_models.std(axis=0, ddof=0))


def select_zeta(zeta_grid: Sequence[float], step_norm: float, radius: float) -> float:
    """Largest grid value whose perturbation ``zeta * step_norm`` stays within ``radius``.

    Falls back to the smallest grid value when none fits.
    """
    grid = sorted(float(z) for z in zeta_grid)
    if not grid:
        raise ValueError("zeta grid is empty")
    best = None
    for z in grid:
        if z * step_norm <= radius:
            best = z
    return grid[0] if best is None else best


def attack_direction(kind: AttackKind, oracle: CollusionOracle) -> np.ndarray:
    kind = AttackKind(kind)
    if kind is AttackKind.FOE:
        return -oracle.honest_mean
    if kind is AttackKind.ALIE:
        return oracle.honest_std
    raise ValueError("no attack direction for AttackKind.NONE")


def foe_poison(oracle: CollusionOracle, zeta_grid: Sequence[float], victim_model: np.ndarray,
               radius: float = math.inf) -> np.ndarray:
    a = -oracle.honest_mean
    z = select_zeta(zeta_grid, float(np.linalg.norm(a)), radius)
    return victim_model + z * a


def alie_poison(oracle: CollusionOracle, zeta_grid: Sequence[float], victim_model: np.ndarray,
                radius: float = math.inf) -> np.ndarray:
    a = oracle.honest_std
    z = select_zeta(zeta_grid, float(np.linalg.norm(a)), radius)
    return victim_model + z * a


RADIUS_RULES = ("rank", "view-quantile")


def filter_rank(kind: AggregatorKind, b: float) -> int:
    """How many of the largest differences the aggregator trims (GTS, CWTM) or clips (CS)."""
    kind = AggregatorKind(kind)
    if kind is AggregatorKind.PLAIN:
        return 0
    k = 2.0 * b if kind is AggregatorKind.CS else float(b)
    return int(math.ceil(k - 1e-12))


def _pairwise_distances(models: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", models, models)
    d2 = sq[:, None] + sq[None, :] - 2.0 * models @ models.T
    return np.sqrt(np.maximum(d2, 0.0))


def estimate_radii(honest_models: np.ndarray, kind: AggregatorKind, b: float, v: int,
                   rule: str = "rank") -> np.ndarray:
    """Per-victim guess of the filtering radius, one entry per row of ``honest_models``.

    ``rank``: the ``k``-th largest distance from the victim to the other honest
    models, with ``k`` the aggregator's filter rank (``b``, or ``2b`` for CS).
    ``view-quantile``: the same rank rescaled to a ``v``-slot view, i.e. the
    ``1 - k/v`` quantile of those distances; much tighter once ``b`` nears ``v``.
    ``inf`` when nothing is filtered, ``0`` when everything is.
    """
    if rule not in RADIUS_RULES:
        raise ValueError(f"unknown radius rule {rule!r}")
    honest_models = np.atleast_2d(np.asarray(honest_models, dtype=np.float64))
    m = honest_models.shape[0]
    k = filter_rank(kind, b)
    if k == 0:
        return np.full(m, np.inf)
    if m < 2:
        return np.zeros(m)
    dist = _pairwise_distances(honest_models)
    # drop each victim's zero distance to itself
    others = dist[~np.eye(m, dtype=bool)].reshape(m, m - 1)
    if rule == "rank":
        if k > m - 1:
            return np.zeros(m)
        return -np.partition(-others, k - 1, axis=1)[:, k - 1]
    share = k / v
    if share >= 1.0:
        return np.zeros(m)
    return np.quantile(others, 1.0 - share, axis=1)

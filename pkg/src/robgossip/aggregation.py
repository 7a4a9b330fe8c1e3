"""Model mixing rules.

All rules centre on the local model: ``z_j = theta_j - theta_i``. GTS drops
the top ``b`` weight mass of largest-norm differences, CS clips every
difference at the norm above which ``2b`` weight mass lies, CWTM trims each
coordinate independently.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NonFiniteModel, ThresholdExceedsMass

_EPS = 1e-12


class AggregatorKind(str, Enum):
    PLAIN = "plain"
    GTS = "gts"
    CS = "cs"
    CWTM = "cwtm"


def as_model(x, name: str = "model") -> np.ndarray:
    """Validate and return a finite 1-d float64 parameter vector."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteModel(f"{name} has non-finite coordinates")
    return arr


@dataclass(frozen=True)
class NeighborDifference:
    source: int
    z: np.ndarray
    norm: float
    weight: float


def clip(z: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.linalg.norm(z))
    if norm == 0.0 or norm <= radius:
        return z
    return z * (radius / norm)


def sort_differences(
    local: np.ndarray,
    received: Sequence[tuple[int, np.ndarray]],
    weights: Sequence[float] | None = None,
) -> list[NeighborDifference]:
    """Differences to the local model, largest norm first (ties: smaller source id)."""
    if weights is None:
        weights = [1.0] * len(received)
    if len(weights) != len(received):
        raise ValueError("one weight per received model is required")
    d = local.shape[0]
    if not received:
        return []
    models = []
    for src, model in received:
        model = np.asarray(model, dtype=np.float64)
        if model.shape != (d,):
            raise DimensionMismatch(f"model from {src} has shape {model.shape}, expected ({d},)")
        models.append(model)
    z = np.vstack(models) - local
    norms = np.sqrt(np.einsum("ij,ij->i", z, z))
    diffs = [NeighborDifference(int(src), z[k], float(norms[k]), float(w))
             for k, ((src, _), w) in enumerate(zip(received, weights))]
    diffs.sort(key=lambda nd: (-nd.norm, nd.source))
    return diffs


def plain_aggregate(local: np.ndarray, diffs: Sequence[NeighborDifference]) -> np.ndarray:
    out = local.copy()
    for nd in diffs:
        out += nd.weight * nd.z
    return out


def gts_aggregate(local: np.ndarray, diffs: Sequence[NeighborDifference], b: float) -> np.ndarray:
    """Geometric trimmed sum.

    Walks the differences from the largest norm down, removing weight mass
    until ``b`` has been trimmed; the pivot keeps its residual weight. With
    unit weights and integer ``b`` this drops exactly the ``b`` largest.
    If ``b`` covers the whole mass the local model is returned.
    """
    if b < 0:
        raise ValueError("b must be non-negative")
    out = local.copy()
    remaining = float(b)
    for nd in diffs:
        trimmed = min(nd.weight, remaining)
        remaining -= trimmed
        kept = nd.weight - trimmed
        if kept > _EPS * max(1.0, nd.weight):
            out += kept * nd.z
    return out


def cs_threshold(diffs: Sequence[NeighborDifference], b: float) -> float:
    """Largest ``tau`` with at least ``2b`` weight mass at norm ``>= tau``.

    ``inf`` for ``b == 0``; ``0`` when ``2b`` exceeds the total mass.
    """
    if b < 0:
        raise ValueError("b must be non-negative")
    if b == 0:
        return np.inf
    need = 2.0 * b
    total = sum(nd.weight for nd in diffs)
    tol = _EPS * max(1.0, total)
    cum = 0.0
    for k, nd in enumerate(diffs):
        cum += nd.weight
        # ties share the same tau, so only stop at the end of a run of equal norms
        if cum >= need - tol and (k + 1 == len(diffs) or diffs[k + 1].norm < nd.norm):
            return nd.norm
    return 0.0


def cs_aggregate(local: np.ndarray, diffs: Sequence[NeighborDifference], b: float) -> np.ndarray:
    radius = cs_threshold(diffs, b)
    out = local.copy()
    for nd in diffs:
        if nd.norm == 0.0:
            continue
        scale = min(1.0, radius / nd.norm)
        out += nd.weight * scale * nd.z
    return out


def cwtm_aggregate(local: np.ndarray, received: Sequence[np.ndarray], b: int) -> np.ndarray:
    """Coordinate-wise trimmed mean over ``{local} + received``."""
    b = int(b)
    stack = np.vstack([local, *received]) if len(received) else local[None, :]
    count = stack.shape[0]
    if b < 0:
        raise ValueError("b must be non-negative")
    if 2 * b >= count:
        raise ThresholdExceedsMass(f"cannot trim 2*{b} of {count} values per coordinate")
    if stack.shape[1] != local.shape[0]:
        raise DimensionMismatch("received models differ in dimension")
    srt = np.sort(stack, axis=0)
    return srt[b:count - b].mean(axis=0)


def gossip_step(local: np.ndarray, aggregated: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """Local descent step taken from the post-mixing model."""
    return aggregated - eta * grad


def aggregate(kind: AggregatorKind, local: np.ndarray, received: Sequence[tuple[int, np.ndarray]],
              weights: Sequence[float], b: float) -> np.ndarray:
    """Dispatch helper used by the simulator (CWTM ignores weights beyond multiplicity)."""
    kind = AggregatorKind(kind)
    if kind is AggregatorKind.CWTM:
        models = []
        for (_, m), w in zip(received, weights):
            models.extend([m] * int(round(w)))
        return cwtm_aggregate(local, models, int(np.ceil(b - _EPS)))
    diffs = sort_differences(local, received, weights)
    if kind is AggregatorKind.PLAIN:
        return plain_aggregate(local, diffs)
    if kind is AggregatorKind.GTS:
        return gts_aggregate(local, diffs, b)
    return cs_aggregate(local, diffs, b)

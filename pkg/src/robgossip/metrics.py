"""Per-round measurements over a round graph."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .graph import RoundGraph

CSV_COLUMNS = ("round", "f_in_out", "f_in_in", "B_t", "b_t", "hssr", "f1_mean", "f1_std", "messages_sent")


@dataclass
class RoundMetrics:
    round: int
    f_in_out: float
    f_in_in: float
    B_t: float
    b_t: float
    hssr: float
    f1_mean: float
    f1_std: float
    messages_sent: int
    # not part of the CSV row
    models_filtered: int = 0
    max_byz_in_view: int = 0
    views_over_threshold: int = 0
    extra: dict = field(default_factory=dict)

    def csv_row(self) -> list[str]:
        return [repr(getattr(self, c)) if isinstance(getattr(self, c), float) else str(getattr(self, c))
                for c in CSV_COLUMNS]

    def to_dict(self) -> dict:
        return asdict(self)


def byz_slot_counts(graph: RoundGraph) -> np.ndarray:
    """Byzantine slots in each honest node's out-view (duplicates counted per slot)."""
    h = graph.honest
    return graph.byzantine[graph.views[h]].sum(axis=1)


def f_in(graph: RoundGraph) -> float:
    """Mean Byzantine share of honest out-views."""
    h = graph.honest
    if h.size == 0:
        raise ValueError("graph has no honest node")
    return float(byz_slot_counts(graph).mean() / graph.views.shape[1])


def f_in_incoming(graph: RoundGraph) -> float:
    """Mean Byzantine share of honest nodes' in-neighbour slots (nodes with no in-link skipped)."""
    n = graph.n
    src = np.repeat(np.arange(n), graph.views.shape[1])
    dst = graph.views.ravel()
    total = np.bincount(dst, minlength=n)
    byz = np.bincount(dst, weights=graph.byzantine[src].astype(float), minlength=n)
    h = graph.honest
    mask = total[h] > 0
    if not mask.any():
        return 0.0
    return float(np.mean(byz[h][mask] / total[h][mask]))


def strongly_connected_components(n: int, adj: Sequence[Sequence[int]]) -> list[list[int]]:
    """Tarjan's algorithm, iterative; ``adj[u]`` lists successors of ``u`` in ``range(n)``."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            u, i = work[-1]
            succ = adj[u]
            if i < len(succ):
                work[-1] = (u, i + 1)
                w = succ[i]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[u] = min(low[u], index[w])
                continue
            work.pop()
            if work:
                p = work[-1][0]
                low[p] = min(low[p], low[u])
            if low[u] == index[u]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == u:
                        break
                comps.append(comp)
    return comps


def hssr(graph: RoundGraph) -> float:
    """Share of honest nodes in the largest SCC of the honest-induced out-link subgraph."""
    h = graph.honest
    if h.size == 0:
        raise ValueError("graph has no honest node")
    local = -np.ones(graph.n, dtype=np.int64)
    local[h] = np.arange(h.size)
    adj = []
    for i in h:
        tgt = local[graph.views[i]]
        adj.append(sorted(set(int(t) for t in tgt if t >= 0)))
    comps = strongly_connected_components(h.size, adj)
    return max(len(c) for c in comps) / h.size


def summarize_f1(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no F1 values to summarise")
    return float(arr.mean()), float(arr.std(ddof=0))

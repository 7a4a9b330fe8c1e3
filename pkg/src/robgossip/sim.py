"""Synchronous round loop: identifier exchange, view selection, threshold, model mixing, training."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import adversary, apt, learning, metrics
from .aggregation import AggregatorKind, aggregate, as_model
from .config import SimConfig
from .errors import ConfigError, RoundError, SimulationError
from .graph import History, NodeState, RoundGraph, fresh_seeds, select_view
from .sampling import (PullResponse, PushMessage, SamplerKind, SeedRefreshPolicy, absorb, basalt_round,
                       pick_targets, refresh_seeds)

log = logging.getLogger(__name__)


def _bootstrap_ids(i: int, n: int, size: int, byz: np.ndarray, rng: np.random.Generator) -> list[int]:
    """``size`` i.i.d. ids from everyone but ``i``, redrawn until one is honest."""
    while True:
        draw = rng.integers(0, n - 1, size=size)
        draw = draw + (draw >= i)
        if (~byz[draw]).any():
            return [int(x) for x in draw]


def _byz_view(honest: np.ndarray, v: int, rng: np.random.Generator) -> np.ndarray:
    # the omniscient adversary keeps honest nodes as its neighbours
    return rng.choice(honest, size=v, replace=honest.size < v)


def bootstrap(cfg: SimConfig, rng: np.random.Generator, node_rngs: list[np.random.Generator]
              ) -> tuple[list[NodeState], np.ndarray]:
    """Assign roles, bootstrap histories and initial views. Models are left unset."""
    n = cfg.n
    byz = np.zeros(n, dtype=bool)
    byz[rng.permutation(n)[: cfg.n_byz]] = True
    honest = np.flatnonzero(~byz)
    byz_ids = np.flatnonzero(byz)
    nodes = []
    for i in range(n):
        r = node_rngs[i]
        seeds = fresh_seeds(r, cfg.v)
        if byz[i]:
            hist = History.from_ids(i, [])
            view = _byz_view(honest, cfg.v, r)
        else:
            hist = History.from_ids(i, _bootstrap_ids(i, n, cfg.bootstrap_size, byz, r))
            if cfg.worst_case_init:
                hist.update(byz_ids)
            view = select_view(hist.as_array(), seeds, i)
        nodes.append(NodeState(i, bool(byz[i]), hist, seeds, view, r))
    return nodes, byz


@dataclass
class RunArtifact:
    config: dict
    rows: list[metrics.RoundMetrics]
    final_f1: list[float]
    duration_s: float
    honest_ids: list[int] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "config": self.config,
            "rounds": len(self.rows),
            "final_f1": self.final_f1,
            "final_f1_mean": float(np.mean(self.final_f1)) if self.final_f1 else None,
            "duration_s": self.duration_s,
            "views_over_threshold": [r.views_over_threshold for r in self.rows],
            "max_byz_in_view": [r.max_byz_in_view for r in self.rows],
        }


class Simulation:
    """All node states plus the shared task; ``step()`` advances one round."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg.validate()
        ss = np.random.SeedSequence(cfg.seed)
        roles_ss, data_ss, adv_ss, nodes_ss = ss.spawn(4)
        node_children = nodes_ss.spawn(2 * cfg.n)
        self.sample_rngs = [np.random.default_rng(s) for s in node_children[: cfg.n]]
        self.train_rngs = [np.random.default_rng(s) for s in node_children[cfg.n:]]
        self.adv_rng = np.random.default_rng(adv_ss)
        self.nodes, self.byz = bootstrap(cfg, np.random.default_rng(roles_ss), self.sample_rngs)
        self.honest = np.flatnonzero(~self.byz)
        self.byz_ids = np.flatnonzero(self.byz)
        self.t = 0
        self.force = cfg.force
        self.policy = SeedRefreshPolicy(cfg.seed_interval, cfg.seeds_per_refresh)
        self.sampler = SamplerKind(cfg.sampler)
        self.kind = AggregatorKind(cfg.aggregator)
        self.attack = adversary.AttackKind(cfg.attack)
        self.apt_params = None
        if self.honest.size and self.byz_ids.size:
            self.apt_params = apt.AptParams.from_system(cfg.n, self.byz_ids.size, cfg.bootstrap_size,
                                                        cfg.v, cfg.kappa, cfg.f0)
        self._setup_task(np.random.default_rng(data_ss))

    # -- learning task -------------------------------------------------
    def _setup_task(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        if cfg.dataset == "idx":
            pool = learning.load_idx(cfg.idx_images, cfg.idx_labels, cfg.n_classes)
        else:
            total = int(round(cfg.n * cfg.samples_per_node / (1.0 - cfg.test_fraction)))
            pool = learning.make_blobs(total, cfg.n_classes, cfg.d_in, cfg.separation, rng)
        self.train_pool, self.test = learning.train_test_split(pool, cfg.test_fraction, rng)
        if cfg.eval_samples and len(self.test) > cfg.eval_samples:
            keep = np.sort(rng.choice(len(self.test), size=cfg.eval_samples, replace=False))
            self.test = self.test.subset(keep)
        part = learning.dirichlet_partition(self.train_pool, cfg.n, cfg.dirichlet_beta, rng)
        self.shards = part.shards
        self.trainer = learning.TrainerConfig(cfg.eta, cfg.momentum, cfg.batch_size, cfg.local_steps)
        dim = learning.model_dim(pool.dim, pool.n_classes)
        self.models = np.zeros((cfg.n, dim))
        self.momenta = np.zeros((cfg.n, dim))
        self.batchers = {int(i): learning.BatchSampler(len(self.shards[i]), cfg.batch_size, self.train_rngs[i])
                         for i in self.honest}
        self.last_f1 = self._evaluate()

    def _evaluate(self) -> np.ndarray:
        if self.honest.size == 0:
            return np.zeros(0)
        return learning.f1_many(self.models[self.honest], self.test)

    # -- thresholds ----------------------------------------------------
    def threshold(self, t: int) -> tuple[float, float]:
        """(B_t overlay, threshold used this round)."""
        B_t, b_apt = 0.0, 0.0
        if self.apt_params is not None:
            B_t, _, b_apt = apt.b_of_t(self.apt_params, t)
        fixed = self.cfg.threshold_value()
        return B_t, (b_apt if fixed is None else fixed)

    # -- one round -----------------------------------------------------
    def _exchange_ids(self, t: int) -> int:
        cfg, nodes = self.cfg, self.nodes
        prev = [nd.view.copy() for nd in nodes]
        pushes: dict[int, list[PushMessage]] = {int(i): [] for i in self.honest}
        pulls: dict[int, list[PullResponse]] = {int(i): [] for i in self.honest}
        sent = 0
        for i in range(cfg.n):
            nd = nodes[i]
            if nd.byzantine:
                hn = [int(x) for x in prev[i] if not self.byz[x]]
                msgs = adversary.flood_round(i, hn, self.force, self.byz_ids, cfg.v, self.adv_rng)
                for m in msgs:
                    pushes[m.target].append(m)
                sent += len(msgs)
                continue
            push_to, pull_from = pick_targets(nd)
            sent += 2
            if not self.byz[push_to]:
                pushes[push_to].append(PushMessage(i, push_to, tuple(int(x) for x in prev[i])))
            if self.byz[pull_from]:
                ids = adversary.byzantine_ids_reply(self.byz_ids, cfg.v, self.adv_rng)
            else:
                ids = tuple(int(x) for x in prev[pull_from])
            pulls[i].append(PullResponse(pull_from, i, ids))

        for i in self.honest:
            nd = nodes[i]
            if self.sampler is SamplerKind.HAPS:
                absorb(nd, pushes[int(i)], pulls[int(i)])
                refresh_seeds(nd, t, self.policy)
                nd.reselect()
            else:
                basalt_round(nd, pushes[int(i)], pulls[int(i)], t, cfg.basalt_rho)
        for j in self.byz_ids:
            nodes[j].view = _byz_view(self.honest, cfg.v, nodes[j].rng)
        return sent

    def _mix_and_train(self, b: float) -> None:
        cfg = self.cfg
        H = self.honest
        old = self.models.copy()
        honest_models = old[H]
        poisons = None
        if self.attack is not adversary.AttackKind.NONE and self.byz_ids.size:
            oracle = adversary.CollusionOracle.from_models(honest_models)
            direction = adversary.attack_direction(self.attack, oracle)
            step = float(np.linalg.norm(direction))
            radii = adversary.estimate_radii(honest_models, self.kind, b, cfg.v, cfg.radius_rule)
            zetas = np.array([adversary.select_zeta(cfg.zeta_grid, step, r) for r in radii])
            poisons = honest_models + zetas[:, None] * direction[None, :]
        scale = 1.0 / (cfg.v + 1)
        for row, i in enumerate(H):
            local = old[i]
            ids, mult = np.unique(self.nodes[i].view, return_counts=True)
            received = []
            for j in ids:
                if not self.byz[j]:
                    received.append((int(j), old[j]))
                elif poisons is not None:
                    received.append((int(j), poisons[row]))
                else:
                    received.append((int(j), local))
            if self.kind is AggregatorKind.CWTM:
                cap = cfg.v // 2
                mixed = aggregate(self.kind, local, received, mult.astype(float), min(math.ceil(b), cap))
            else:
                out = aggregate(self.kind, local, received, mult.astype(float), b)
                mixed = local + scale * (out - local)
            mixed = as_model(mixed, f"model of node {i}")
            mixed, self.momenta[i] = learning.local_step(mixed, self.shards[i], self.trainer,
                                                         self.momenta[i], self.batchers[int(i)])
            self.models[i] = mixed

    def step(self) -> metrics.RoundMetrics:
        t = self.t + 1
        try:
            sent = self._exchange_ids(t)
            B_t, b = self.threshold(t)
            if self.cfg.train:
                self._mix_and_train(b)
                if t % self.cfg.eval_every == 0 or t == self.cfg.rounds:
                    self.last_f1 = self._evaluate()
            row = self._measure(t, B_t, b, sent)
        except SimulationError as exc:
            raise RoundError(t, exc) from exc
        self.t = t
        return row

    def graph(self) -> RoundGraph:
        return RoundGraph(self.t, np.vstack([nd.view for nd in self.nodes]), self.byz)

    def _measure(self, t: int, B_t: float, b: float, sent: int) -> metrics.RoundMetrics:
        g = RoundGraph(t, np.vstack([nd.view for nd in self.nodes]), self.byz)
        if self.honest.size == 0:
            raise SimulationError("no honest node to measure")
        counts = metrics.byz_slot_counts(g)
        ceil_b = int(math.ceil(b - 1e-12))
        f1_mean, f1_std = metrics.summarize_f1(self.last_f1)
        return metrics.RoundMetrics(
            round=t,
            f_in_out=metrics.f_in(g),
            f_in_in=metrics.f_in_incoming(g),
            B_t=float(B_t),
            b_t=float(b),
            hssr=metrics.hssr(g),
            f1_mean=f1_mean,
            f1_std=f1_std,
            messages_sent=int(sent),
            models_filtered=ceil_b,
            max_byz_in_view=int(counts.max()) if counts.size else 0,
            views_over_threshold=int((counts > ceil_b).sum()),
        )


def _check_out_dir(out) -> Path:
    path = Path(out)
    if not path.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {path}")
    return path


def run(cfg: SimConfig, out: str | Path | None = None) -> RunArtifact:
    """Bootstrap and run ``cfg.rounds`` rounds; writes ``metrics.csv`` and ``summary.json`` if ``out`` is set."""
    out = out if out is not None else cfg.out
    out_dir = _check_out_dir(out) if out is not None else None
    start = time.perf_counter()
    sim = Simulation(cfg)
    rows: list[metrics.RoundMetrics] = []
    fh = writer = None
    if out_dir is not None:
        fh = open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(metrics.CSV_COLUMNS)
    try:
        for _ in range(cfg.rounds):
            row = sim.step()
            rows.append(row)
            if writer is not None:
                writer.writerow(row.csv_row())
                fh.flush()
            log.debug("round %d f_in=%.3f b=%.2f f1=%.3f", row.round, row.f_in_out, row.b_t, row.f1_mean)
    finally:
        if fh is not None:
            fh.close()
    art = RunArtifact(cfg.to_dict(), rows, [float(x) for x in sim.last_f1],
                      time.perf_counter() - start, [int(i) for i in sim.honest])
    if out_dir is not None:
        (out_dir / "summary.json").write_text(json.dumps(art.summary(), indent=2), encoding="utf-8")
    return art

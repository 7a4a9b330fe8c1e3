"""Adaptive probabilistic threshold.

Closed-form growth of known honest identifiers, the resulting bound on the
Byzantine share of a view, and the Chernoff inversion giving the per-round
filtering threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class AptParams:
    n_honest: int
    n_byz: int
    c0: float
    view_size: int
    kappa: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.n_byz < 0:
            raise ValueError("n_byz must be >= 0")
        if self.c0 < 1 and self.n_honest > 0:
            raise ValueError("c0 must be >= 1 (at least one honest bootstrap id)")

    @property
    def n(self) -> int:
        return self.n_honest + self.n_byz

    @classmethod
    def from_system(cls, n: int, n_byz: int, bootstrap_size: int, view_size: int,
                    kappa: float = 1e-3, f0: float | None = None) -> "AptParams":
        """Build params with ``c0 = (1 - f0) * |I|``; ``f0`` defaults to ``n_byz / n``."""
        if f0 is None:
            f0 = n_byz / n
        c0 = max(1.0, (1.0 - f0) * bootstrap_size)
        return cls(n - n_byz, n_byz, c0, view_size, kappa)


@dataclass(frozen=True)
class AptEstimate:
    t: int
    alpha: float
    c_t: float
    B_t: float
    delta: float
    b_t: float


def alpha(params: AptParams, n: int | None = None) -> float:
    """Arrival rate of honest ids per round, pull plus mean-field push."""
    n = params.n if n is None else n
    honest_share = params.c0 / (params.c0 + params.n_byz)
    a_pull = honest_share**2 * params.view_size
    a_push = params.n_honest / (n - 1) * honest_share * params.view_size
    return a_pull + a_push


def c_of_t(params: AptParams, a: float, t: float) -> float:
    H = params.n_honest
    return H - (H - params.c0) * math.exp(-a * t / H)


def byz_ratio(params: AptParams, t: float, a: float | None = None) -> float:
    if params.n_byz == 0:
        return 0.0
    a = alpha(params) if a is None else a
    return params.n_byz / (params.n_byz + c_of_t(params, a, t))


def chernoff_delta(v: int, p: float, kappa: float) -> float:
    """Positive root of ``delta**2 * v * p / (delta + 2) = -ln(kappa)``."""
    lk = math.log(kappa)
    vp = v * p
    return (-lk + math.sqrt(lk * lk - 8.0 * vp * lk)) / (2.0 * vp)


def chernoff_tail(v: int, p: float, delta: float) -> float:
    """Upper bound on ``P(X >= (1 + delta) v p)`` for ``X ~ Binomial(v, p)``."""
    return math.exp(-(delta**2) * v * p / (delta + 2.0))


def b_of_t(params: AptParams, t: float) -> tuple[float, float, float]:
    """``(B_t, delta, b_t)`` for round ``t``; ``b_t`` capped at ``v - 1``.

    With no Byzantine nodes all three are 0.
    """
    if params.n_byz == 0:
        return 0.0, 0.0, 0.0
    B_t = byz_ratio(params, t)
    v = params.view_size
    delta = chernoff_delta(v, B_t, params.kappa)
    b_t = min((1.0 + delta) * v * B_t, v - 1.0)
    return B_t, delta, b_t


def threshold_from_ratio(v: int, B_t: float, kappa: float) -> tuple[float, float]:
    """``(delta, b)`` for a given Byzantine ratio, without the time model."""
    delta = chernoff_delta(v, B_t, kappa)
    return delta, min((1.0 + delta) * v * B_t, v - 1.0)


def estimate(params: AptParams, t: int) -> AptEstimate:
    a = alpha(params)
    B_t, delta, b_t = b_of_t(params, t)
    return AptEstimate(t, a, c_of_t(params, a, t), B_t, delta, b_t)

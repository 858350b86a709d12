"""Two-type Brock-Hommes asset pricing model, in deviations from the fundamental.

Each period the two belief types forecast ``f_h = g_h * x_{t-1} + b_h``,
their market shares follow a logit over last period's fitness, the market
clears at ``x_t = (n1 f1 + n2 f2) / R`` and fitness accumulates realised
excess-return profits minus the forecast cost.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

DIVERGENCE_BOUND = 1e8


@dataclass(frozen=True)
class BHParams:
    beta: float
    b1: float
    b2: float
    g1: float
    g2: float
    cost: float
    omega: float
    sigma: float
    nu: float
    r_gross: float
    n1_init: float = 0.5
    horizon: int = 500
    fundamental: float = 100.0
    noise: float = 0.0
    cost_both: bool = False

    def __post_init__(self):
        if self.r_gross <= 1.0:
            raise ValueError("r_gross must exceed 1")
        if self.beta < 0 or self.cost < 0 or self.nu < 0 or self.sigma < 0:
            raise ValueError("beta, cost, nu and sigma must be non-negative")
        if not 0.0 <= self.omega <= 1.0 or not 0.0 <= self.n1_init <= 1.0:
            raise ValueError("omega and n1_init must lie in [0, 1]")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")

    @classmethod
    def from_mapping(cls, values: dict) -> "BHParams":
        known = {k: values[k] for k in cls.__dataclass_fields__ if k in values}
        if "horizon" in known:
            known["horizon"] = int(known["horizon"])
        return cls(**known)


@dataclass
class PriceSeries:
    prices: np.ndarray
    fundamental: float
    x: np.ndarray
    n1: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    divergent: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.prices)


def bh_simulate(params: BHParams, seed: int = 0, x0: float = 0.1) -> PriceSeries:
    """Run the recursion for ``params.horizon`` periods.

    Explosive runs (|x| above ``DIVERGENCE_BOUND``, or any non-finite state)
    stop early: the remaining entries are NaN and ``divergent`` is set.
    """
    T = params.horizon
    R = params.r_gross
    g1, g2, b1, b2 = params.g1, params.g2, params.b1, params.b2
    beta, omega = params.beta, params.omega
    c1 = params.cost
    c2 = params.cost if params.cost_both else 0.0
    risk = params.nu * params.sigma**2
    rng = np.random.default_rng(seed) if params.noise > 0 else None

    xs = np.full(T, np.nan)
    n1s = np.full(T, np.nan)
    u1s = np.full(T, np.nan)
    u2s = np.full(T, np.nan)
    x_prev, u1, u2 = float(x0), 0.0, 0.0
    divergent = False
    for t in range(T):
        f1 = g1 * x_prev + b1
        f2 = g2 * x_prev + b2
        if t == 0:
            n1 = params.n1_init
        else:
            a1, a2 = beta * u1, beta * u2
            top = max(a1, a2)
            e1, e2 = math.exp(a1 - top), math.exp(a2 - top)
            n1 = e1 / (e1 + e2)
        n2 = 1.0 - n1
        x = (n1 * f1 + n2 * f2) / R
        if rng is not None:
            x += rng.normal(0.0, params.noise)
        excess = x - R * x_prev
        try:
            u1 = excess * (f1 - R * x_prev) / risk - c1 + omega * u1
            u2 = excess * (f2 - R * x_prev) / risk - c2 + omega * u2
        except ZeroDivisionError:
            u1 = u2 = math.nan
        if not (math.isfinite(x) and math.isfinite(u1) and math.isfinite(u2)) or abs(x) > DIVERGENCE_BOUND:
            divergent = True
            break
        xs[t], n1s[t], u1s[t], u2s[t] = x, n1, u1, u2
        x_prev = x
    return PriceSeries(
        prices=params.fundamental + xs,
        fundamental=params.fundamental,
        x=xs,
        n1=n1s,
        u1=u1s,
        u2=u2s,
        divergent=divergent,
    )


def log_returns(series: PriceSeries | np.ndarray) -> np.ndarray:
    """``log p_t - log p_{t-1}``; raises on any non-positive or missing price."""
    p = np.asarray(series.prices if isinstance(series, PriceSeries) else series, dtype=float)
    if p.size < 2:
        raise ValueError("need at least two prices")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise ValueError("prices must be finite and strictly positive")
    lp = np.log(p)
    return lp[1:] - lp[:-1]


def write_series_csv(path, series: PriceSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "p", "n1", "u1", "u2"])
        for t in range(len(series)):
            w.writerow([t + 1, *(repr(float(v)) for v in (
                series.x[t], series.prices[t], series.n1[t], series.u1[t], series.u2[t]))])

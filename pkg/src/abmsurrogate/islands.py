"""Islands endogenous-growth model on an infinite, lazily realised 2-D lattice.

Every random draw is a counter-based variate keyed by what it decides
(node coordinates, period and agent, ...), so a run is a pure function of
``(params, seed)`` and independent of iteration order.

Period order: miners turn explorer; explorers step and colonise islands;
occupied islands broadcast signals and miners may turn imitator; imitators
step toward their target; miners produce.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from numba import types as nbtypes
from numba.typed import Dict

from . import hashing as H
from .hashing import uniform4, uniform5

MINER, EXPLORER, IMITATOR = 0, 1, 2
_SQRT3 = math.sqrt(3.0)
_OFFSET = 1 << 24
_SPAN = 1 << 25


@dataclass(frozen=True)
class IslandParams:
    rho: float
    alpha: float
    phi: float
    pi: float
    epsilon: float
    lam: float = 1.0
    n_agents: int = 50
    horizon: int = 1000
    s_origin: float = 1.0
    s_min: float = 1e-3

    def __post_init__(self):
        if self.rho < 0 or self.alpha < 0 or self.lam < 0:
            raise ValueError("rho, alpha and lam must be non-negative")
        for name in ("phi", "pi", "epsilon"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.n_agents < 1 or self.horizon < 2:
            raise ValueError("need at least one agent and two periods")
        if self.horizon >= _OFFSET // 2:
            raise ValueError("horizon too long for the lattice key range")

    @classmethod
    def from_mapping(cls, values: dict) -> "IslandParams":
        known = {k: values[k] for k in cls.__dataclass_fields__ if k in values}
        for k in ("n_agents", "horizon"):
            if k in known:
                known[k] = int(known[k])
        return cls(**known)


@dataclass
class GdpSeries:
    gdp: np.ndarray
    n_miners: np.ndarray
    n_explorers: np.ndarray
    n_imitators: np.ndarray
    n_islands: np.ndarray

    def __len__(self):
        return len(self.gdp)


@njit(cache=True)
def _key(x, y):
    return (x + _OFFSET) * _SPAN + (y + _OFFSET)


@njit(cache=True)
def _poisson(u, lam):
    k = 0
    p = math.exp(-lam)
    cdf = p
    while u > cdf and k < 10_000:
        k += 1
        p *= lam / k
        cdf += p
    return k


@njit(cache=True)
def _is_island(seed, x, y, pi):
    return uniform4(seed, H.NODE, x, y) < pi


@njit(cache=True)
def _simulate(rho, alpha, phi, pi, eps, lam, n_agents, horizon, s_origin, s_min, seed):
    cap = n_agents * horizon + 1
    isl_x = np.zeros(cap, np.int64)
    isl_y = np.zeros(cap, np.int64)
    isl_s = np.zeros(cap, np.float64)
    isl_m = np.zeros(cap, np.int64)
    index = Dict.empty(key_type=nbtypes.int64, value_type=nbtypes.int64)
    index[_key(0, 0)] = 0
    isl_s[0] = s_origin
    isl_m[0] = n_agents
    n_isl = 1

    mode = np.zeros(n_agents, np.int64)
    ax = np.zeros(n_agents, np.int64)
    ay = np.zeros(n_agents, np.int64)
    at = np.zeros(n_agents, np.int64)  # island mined, left, or targeted
    memq = np.zeros(n_agents, np.float64)

    gdp = np.zeros(horizon)
    n_min = np.zeros(horizon, np.int64)
    n_exp = np.zeros(horizon, np.int64)
    n_imi = np.zeros(horizon, np.int64)
    n_disc = np.zeros(horizon, np.int64)
    new_target = np.full(n_agents, -1, np.int64)
    occupied = np.zeros(n_agents, np.int64)

    for t in range(horizon):
        # 1. miners may leave to explore
        for i in range(n_agents):
            if mode[i] == MINER and uniform4(seed, H.EXPLORE, t, i) < eps:
                mode[i] = EXPLORER
                isl_m[at[i]] -= 1

        # 2. explorers random-walk and colonise the first island they reach
        for i in range(n_agents):
            if mode[i] != EXPLORER:
                continue
            d = int(uniform4(seed, H.STEP, t, i) * 4.0)
            if d == 0:
                ax[i] += 1
            elif d == 1:
                ax[i] -= 1
            elif d == 2:
                ay[i] += 1
            else:
                ay[i] -= 1
            k = _key(ax[i], ay[i])
            j = index[k] if k in index else -1
            if j == -1 and _is_island(seed, ax[i], ay[i], pi):
                w = _poisson(uniform4(seed, H.POISSON, t, i), lam)
                noise = _SQRT3 * (2.0 * uniform4(seed, H.NOISE, t, i) - 1.0)
                s = (1.0 + w) * (abs(ax[i]) + abs(ay[i]) + phi * memq[i] + noise)
                j = n_isl
                isl_x[j] = ax[i]
                isl_y[j] = ay[i]
                isl_s[j] = s if s > s_min else s_min
                index[k] = j
                n_isl += 1
            if j != -1 and j != at[i]:
                mode[i] = MINER
                at[i] = j
                isl_m[j] += 1

        # 3. signals from occupied islands; miners may start imitating
        n_occ = 0
        total_m = 0
        for j in range(n_isl):
            if isl_m[j] > 0:
                if n_occ < n_agents:
                    occupied[n_occ] = j
                n_occ += 1
                total_m += isl_m[j]
        for i in range(n_agents):
            new_target[i] = -1
            if mode[i] != MINER:
                continue
            own_j = at[i]
            own = isl_s[own_j] * isl_m[own_j] ** (alpha - 1.0)
            best_j = -1
            best_pc = 0.0
            best_d = 0
            for q in range(n_occ):
                j = occupied[q]
                if j == own_j:
                    continue
                pc = isl_s[j] * isl_m[j] ** (alpha - 1.0)
                if pc <= own:
                    continue
                dist = abs(isl_x[j] - ax[i]) + abs(isl_y[j] - ay[i])
                w = isl_m[j] / total_m * math.exp(-rho * dist)
                if uniform5(seed, H.SIGNAL, t, i, _key(isl_x[j], isl_y[j])) >= w:
                    continue
                better = False
                if best_j == -1 or pc > best_pc:
                    better = True
                elif pc == best_pc:
                    if dist < best_d:
                        better = True
                    elif dist == best_d:
                        if isl_x[j] < isl_x[best_j] or (isl_x[j] == isl_x[best_j] and isl_y[j] < isl_y[best_j]):
                            better = True
                if better:
                    best_j, best_pc, best_d = j, pc, dist
            new_target[i] = best_j
        for i in range(n_agents):
            if new_target[i] != -1:
                isl_m[at[i]] -= 1
                mode[i] = IMITATOR
                at[i] = new_target[i]

        # 4. imitators walk the shortest Manhattan path, x first
        for i in range(n_agents):
            if mode[i] != IMITATOR:
                continue
            j = at[i]
            if ax[i] != isl_x[j]:
                ax[i] += 1 if isl_x[j] > ax[i] else -1
            elif ay[i] != isl_y[j]:
                ay[i] += 1 if isl_y[j] > ay[i] else -1
            if ax[i] == isl_x[j] and ay[i] == isl_y[j]:
                mode[i] = MINER
                isl_m[j] += 1

        # 5. production
        total = 0.0
        for i in range(n_agents):
            if mode[i] == MINER:
                j = at[i]
                q = isl_s[j] * isl_m[j] ** (alpha - 1.0)
                memq[i] = q
                total += q
                n_min[t] += 1
            elif mode[i] == EXPLORER:
                n_exp[t] += 1
            else:
                n_imi[t] += 1
        gdp[t] = total
        n_disc[t] = n_isl
    return gdp, n_min, n_exp, n_imi, n_disc


def islands_simulate(params: IslandParams, seed: int = 0) -> GdpSeries:
    p = params
    out = _simulate(
        float(p.rho), float(p.alpha), float(p.phi), float(p.pi), float(p.epsilon), float(p.lam),
        int(p.n_agents), int(p.horizon), float(p.s_origin), float(p.s_min), int(seed),
    )
    return GdpSeries(*out)


def realize_node(seed: int, x: int, y: int, pi: float) -> bool:
    """Whether lattice node ``(x, y)`` is an island; the origin always is."""
    if x == 0 and y == 0:
        return True
    return bool(_is_island(int(seed), int(x), int(y), float(pi)))


def node_uniform(seed: int, x: int, y: int) -> float:
    return float(uniform4(int(seed), H.NODE, int(x), int(y)))


def write_gdp_csv(path, series: GdpSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "gdp", "n_miners", "n_explorers", "n_imitators", "n_islands"])
        for t in range(len(series)):
            w.writerow([t + 1, repr(float(series.gdp[t])), int(series.n_miners[t]),
                        int(series.n_explorers[t]), int(series.n_imitators[t]), int(series.n_islands[t])])

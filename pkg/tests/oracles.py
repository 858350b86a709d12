"""Slow, straightforward re-implementations used as reference answers in tests."""
from __future__ import annotations

import math

import numpy as np

MASK = (1 << 64) - 1


def ks_brute(a, b) -> float:
    """Largest ECDF gap, evaluated at every pooled sample point."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    best = 0.0
    for z in np.concatenate([a, b]):
        gap = abs(int(np.sum(a <= z)) / len(a) - int(np.sum(b <= z)) / len(b))
        best = max(best, gap)
    return best


def split_brute(X, g, h, rows, mcw, lam, min_gain):
    """Best (gain, feature, threshold) by trying every cut of every feature.

    Candidates run feature by feature in ascending threshold order and only a
    strictly larger gain replaces the incumbent.
    """
    rows = np.asarray(rows)
    G = float(sum(g[r] for r in rows))
    Hs = float(sum(h[r] for r in rows))
    parent = G * G / (Hs + lam) if Hs + lam > 0 else 0.0
    best = (min_gain, -1, 0.0)
    for f in range(X.shape[1]):
        vals = sorted(set(X[rows, f].tolist()))
        for lo, hi in zip(vals[:-1], vals[1:]):
            mid = 0.5 * (lo + hi)
            thr = mid if mid > lo else hi
            go_left = [r for r in rows if X[r, f] < thr]
            go_right = [r for r in rows if not X[r, f] < thr]
            GL = float(sum(g[r] for r in go_left))
            HL = float(sum(h[r] for r in go_left))
            GR = float(sum(g[r] for r in go_right))
            HR = float(sum(h[r] for r in go_right))
            if HL < mcw or HR < mcw or HL + lam <= 0 or HR + lam <= 0:
                continue
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent)
            if gain > best[0]:
                best = (gain, f, thr)
    return best


def bh_one_step(x_prev, u1_prev, u2_prev, t, p, shock):
    """One period of the two-type recursion written out from its definition."""
    R = p.r_gross
    f1 = p.g1 * x_prev + p.b1
    f2 = p.g2 * x_prev + p.b2
    if t == 0:
        n1 = p.n1_init
    else:
        a1, a2 = p.beta * u1_prev, p.beta * u2_prev
        m = max(a1, a2)
        n1 = math.exp(a1 - m) / (math.exp(a1 - m) + math.exp(a2 - m))
    x = (n1 * f1 + (1.0 - n1) * f2) / R + shock
    risk = p.nu * p.sigma ** 2
    c2 = p.cost if p.cost_both else 0.0
    u1 = (x - R * x_prev) * (f1 - R * x_prev) / risk - p.cost + p.omega * u1_prev
    u2 = (x - R * x_prev) * (f2 - R * x_prev) / risk - c2 + p.omega * u2_prev
    return x, n1, u1, u2


# ---- Islands -------------------------------------------------------------

_GOLD = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
OFFSET = 1 << 24
SPAN = 1 << 25
TAG_NODE, TAG_EXPLORE, TAG_STEP, TAG_POISSON, TAG_NOISE, TAG_SIGNAL = 1, 2, 3, 4, 5, 6


def splitmix(h, v):
    z = (h ^ (v & MASK)) & MASK
    z = (z + _GOLD) & MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def unif(*keys):
    h = 0
    for k in keys:
        h = splitmix(h, k)
    return (h >> 11) * 2.0 ** -53


def node_key(x, y):
    return (x + OFFSET) * SPAN + (y + OFFSET)


def poisson_inverse(u, lam):
    k, p = 0, math.exp(-lam)
    cdf = p
    while u > cdf and k < 10_000:
        k += 1
        p *= lam / k
        cdf += p
    return k


def islands_reference(p, seed):
    """Plain-Python Islands run; returns (gdp, miners, explorers, imitators, islands) lists."""
    islands = {(0, 0): {"s": p.s_origin, "m": p.n_agents, "order": 0}}
    agents = [{"mode": "miner", "pos": (0, 0), "home": (0, 0), "q": 0.0} for _ in range(p.n_agents)]
    gdp, nm, ne, ni, nd = [], [], [], [], []

    def per_capita(c):
        isl = islands[c]
        return isl["s"] * float(isl["m"]) ** (p.alpha - 1.0)

    for t in range(p.horizon):
        for i, a in enumerate(agents):
            if a["mode"] == "miner" and unif(seed, TAG_EXPLORE, t, i) < p.epsilon:
                a["mode"] = "explorer"
                islands[a["home"]]["m"] -= 1

        for i, a in enumerate(agents):
            if a["mode"] != "explorer":
                continue
            x, y = a["pos"]
            d = int(unif(seed, TAG_STEP, t, i) * 4.0)
            x, y = [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)][d]
            a["pos"] = (x, y)
            if (x, y) not in islands and unif(seed, TAG_NODE, x, y) < p.pi:
                w = poisson_inverse(unif(seed, TAG_POISSON, t, i), p.lam)
                noise = math.sqrt(3.0) * (2.0 * unif(seed, TAG_NOISE, t, i) - 1.0)
                s = (1.0 + w) * (abs(x) + abs(y) + p.phi * a["q"] + noise)
                islands[(x, y)] = {"s": s if s > p.s_min else p.s_min, "m": 0, "order": len(islands)}
            if (x, y) in islands and (x, y) != a["home"]:
                a["mode"] = "miner"
                a["home"] = (x, y)
                islands[(x, y)]["m"] += 1

        occupied = sorted((c for c in islands if islands[c]["m"] > 0), key=lambda c: islands[c]["order"])
        total_m = sum(islands[c]["m"] for c in occupied)
        targets = {}
        for i, a in enumerate(agents):
            if a["mode"] != "miner":
                continue
            own = per_capita(a["home"])
            x, y = a["pos"]
            best = None
            for c in occupied:
                if c == a["home"]:
                    continue
                pc = per_capita(c)
                if pc <= own:
                    continue
                dist = abs(c[0] - x) + abs(c[1] - y)
                w = islands[c]["m"] / total_m * math.exp(-p.rho * dist)
                if unif(seed, TAG_SIGNAL, t, i, node_key(*c)) >= w:
                    continue
                cand = (-pc, dist, c[0], c[1])
                if best is None or cand < best[0]:
                    best = (cand, c)
            if best is not None:
                targets[i] = best[1]
        for i, c in targets.items():
            a = agents[i]
            islands[a["home"]]["m"] -= 1
            a["mode"] = "imitator"
            a["home"] = c

        for a in agents:
            if a["mode"] != "imitator":
                continue
            (x, y), (tx, ty) = a["pos"], a["home"]
            if x != tx:
                x += 1 if tx > x else -1
            elif y != ty:
                y += 1 if ty > y else -1
            a["pos"] = (x, y)
            if (x, y) == (tx, ty):
                a["mode"] = "miner"
                islands[(tx, ty)]["m"] += 1

        total = 0.0
        counts = {"miner": 0, "explorer": 0, "imitator": 0}
        for a in agents:
            counts[a["mode"]] += 1
            if a["mode"] == "miner":
                a["q"] = per_capita(a["home"])
                total += a["q"]
        gdp.append(total)
        nm.append(counts["miner"])
        ne.append(counts["explorer"])
        ni.append(counts["imitator"])
        nd.append(len(islands))
    return gdp, nm, ne, ni, nd

"""Calibration criteria: turn simulated series into binary or real labels."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from importlib import resources
from typing import NamedTuple

import numpy as np

from .brock_hommes import PriceSeries, log_returns

KS_LEVEL = 0.05
AGR_GROWTH = 0.02
AGR_GROWTH_ONLY = 0.005
FAT_TAIL_B = 1.0
B_SENTINEL = 5.0
BURN_IN = 50
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class CalibrationLabel(NamedTuple):
    kind: str  # "binary" or "real"
    value: float

    @property
    def binary_value(self) -> int:
        if self.kind != "binary":
            raise AttributeError("real-valued label has no binary value")
        return int(self.value)

    @property
    def real_value(self) -> float:
        if self.kind != "real":
            raise AttributeError("binary label has no real value")
        return self.value


class DegenerateSampleError(ValueError):
    pass


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance, by a sweep over both sorted samples."""
    xa = np.sort(np.asarray(a, dtype=float)).tolist()
    xb = np.sort(np.asarray(b, dtype=float)).tolist()
    n, m = len(xa), len(xb)
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")
    i = j = 0
    d = 0.0
    while i < n and j < m:
        v = xa[i] if xa[i] <= xb[j] else xb[j]
        while i < n and xa[i] == v:
            i += 1
        while j < m and xb[j] == v:
            j += 1
        gap = abs(i / n - j / m)
        if gap > d:
            d = gap
    return d


def ks_pvalue(D: float, n: int, m: int) -> float:
    """Asymptotic two-sample p-value ``P(D_nm >= D)`` from the Kolmogorov series."""
    if n < 1 or m < 1:
        raise ValueError("sample sizes must be >= 1")
    if D <= 0.0:
        return 1.0
    lam2 = D * D * n * m / (n + m)
    total = 0.0
    for k in range(1, 100_000):
        term = math.exp(-2.0 * k * k * lam2)
        total += term if k % 2 else -term
        if term < 1e-12:
            break
    return min(1.0, max(0.0, 2.0 * total))


def load_reference_returns(path=None) -> np.ndarray:
    """Log-returns of a ``Date,AdjClose`` CSV (the bundled file when ``path`` is None)."""
    if path is None:
        text = resources.files("abmsurrogate.data").joinpath("reference_prices.csv").read_text()
    else:
        with open(path, newline="") as fh:
            text = fh.read()
    rows = list(csv.reader(text.splitlines()))
    if not rows or [c.strip() for c in rows[0][:2]] != ["Date", "AdjClose"]:
        raise ValueError("reference file must have header 'Date,AdjClose'")
    parsed = sorted((date.fromisoformat(r[0]), float(r[1])) for r in rows[1:] if r)
    prices = np.array([p for _, p in parsed])
    returns = log_returns(prices)
    if len(returns) < 30 or not np.all(np.isfinite(returns)):
        raise ValueError("reference needs at least 30 finite returns")
    return returns


def bh_label(series: PriceSeries, reference: np.ndarray, kind: str = "binary") -> CalibrationLabel:
    """KS comparison of simulated and reference log-returns.

    Binary: 1 when equality of distributions is not rejected at 5%.  Real:
    the p-value.  Divergent or non-positive price paths score as negatives.
    """
    if series.divergent:
        p = 0.0
    else:
        try:
            sim = log_returns(series)
        except ValueError:
            p = 0.0
        else:
            p = ks_pvalue(ks_statistic(sim, reference), len(sim), len(reference))
    if kind == "binary":
        return CalibrationLabel("binary", 1.0 if p > KS_LEVEL else 0.0)
    if kind == "real":
        return CalibrationLabel("real", p)
    raise ValueError(f"unknown label kind {kind!r}")


def avg_growth_rate(gdp) -> float:
    g = np.asarray(gdp, dtype=float)
    if len(g) < 2 or not (g[0] > 0 and g[-1] > 0):
        return -math.inf
    return (math.log(g[-1]) - math.log(g[0])) / (len(g) - 1)


@dataclass(frozen=True)
class SubbotinFit:
    a: float
    b: float
    mu: float
    loglik: float


def _golden_min(f, lo, hi, tol):
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _check_sample(sample) -> np.ndarray:
    x = np.asarray(sample, dtype=float)
    if x.size < 30:
        raise DegenerateSampleError("need at least 30 observations")
    if not np.all(np.isfinite(x)) or not np.var(x) > 0:
        raise DegenerateSampleError("sample must be finite with positive variance")
    return x


def _profile_at(x: np.ndarray, b: float) -> tuple[float, float, float]:
    lo, hi = float(x.min()), float(x.max())
    mu, s = _golden_min(lambda m: float(np.sum(np.abs(x - m) ** b)), lo, hi, 1e-9 * (hi - lo))
    n = x.size
    a = (s / n) ** (1.0 / b)
    ll = -n * (math.log(2.0) + math.log(a) + math.log(b) / b + math.lgamma(1.0 + 1.0 / b) + 1.0 / b)
    return ll, a, mu


def subbotin_profile_loglik(sample, b: float) -> float:
    """Log-likelihood of the symmetric exponential power law maximised over (a, mu) at shape ``b``."""
    return _profile_at(_check_sample(sample), b)[0]


def subbotin_fit(sample, b_bounds=(0.2, 5.0), tol: float = 1e-6) -> SubbotinFit:
    """Maximum-likelihood fit of density ``exp(-|x-mu|^b / (b a^b)) / (2 a b^(1/b) Gamma(1+1/b))``.

    For fixed shape the location minimises ``sum |x-mu|^b`` and the scale is
    closed form; the shape maximises the resulting profile likelihood.  Both
    one-dimensional searches are golden-section.
    """
    x = _check_sample(sample)
    b, neg_ll = _golden_min(lambda bb: -_profile_at(x, bb)[0], b_bounds[0], b_bounds[1], tol / 4)
    ll, a, mu = _profile_at(x, b)
    return SubbotinFit(a=a, b=b, mu=mu, loglik=ll)


def growth_rates(gdp, burn_in: int = BURN_IN) -> np.ndarray:
    g = np.asarray(gdp, dtype=float)[burn_in:]
    if np.any(~(g > 0)):
        raise DegenerateSampleError("GDP must stay positive to take growth rates")
    return np.diff(np.log(g))


def islands_label(
    gdp,
    kind: str = "binary",
    mode: str = "growth_and_tails",
    burn_in: int = BURN_IN,
    agr_threshold: float | None = None,
    b_threshold: float = FAT_TAIL_B,
) -> CalibrationLabel:
    """Growth / fat-tail criterion on a GDP path.

    The tail fit is only attempted for paths that pass the growth condition;
    paths that fail it (or cannot be fitted) get binary 0 or the real
    sentinel ``B_SENTINEL``.
    """
    if mode not in ("growth_and_tails", "growth_only"):
        raise ValueError(f"unknown islands criterion mode {mode!r}")
    agr = avg_growth_rate(gdp)
    if mode == "growth_only":
        thr = AGR_GROWTH_ONLY if agr_threshold is None else agr_threshold
        if kind == "real":
            return CalibrationLabel("real", agr)
        return CalibrationLabel("binary", 1.0 if agr > thr else 0.0)

    thr = AGR_GROWTH if agr_threshold is None else agr_threshold
    b_hat = None
    if agr > thr:
        try:
            b_hat = subbotin_fit(growth_rates(gdp, burn_in)).b
        except DegenerateSampleError:
            b_hat = None
    if kind == "binary":
        return CalibrationLabel("binary", 1.0 if b_hat is not None and b_hat <= b_threshold else 0.0)
    if kind == "real":
        return CalibrationLabel("real", B_SENTINEL if b_hat is None else b_hat)
    raise ValueError(f"unknown label kind {kind!r}")

"""Parameter spaces and candidate-pool sampling.

Pools are plain ``(n, d)`` float arrays whose columns follow the order of
``ParameterSpace.dims``.  Quasi-random pools come from an unscrambled Sobol
generator driven by the Joe-Kuo direction numbers in ``data/``; an optional
seeded digital shift gives independent replicates that keep the net
structure.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

_BITS = 32
_SCALE = 2.0**-_BITS


class UnsupportedDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Dimension:
    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not (self.lower < self.upper):
            raise ValueError(f"dimension {self.name!r}: lower must be < upper")


@dataclass(frozen=True)
class ParameterSpace:
    """An ordered box of explored parameters plus fixed (non-explored) ones."""

    dims: tuple[Dimension, ...]
    fixed: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dimension names")
        clash = set(names) & set(self.fixed)
        if clash:
            raise ValueError(f"fixed parameters also explored: {sorted(clash)}")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @property
    def lower(self) -> np.ndarray:
        return np.array([d.lower for d in self.dims])

    @property
    def upper(self) -> np.ndarray:
        return np.array([d.upper for d in self.dims])

    def __len__(self) -> int:
        return len(self.dims)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def as_dict(self, vector) -> dict[str, float]:
        """Explored values merged with the fixed ones, keyed by name."""
        out = dict(self.fixed)
        out.update({n: float(v) for n, v in zip(self.names, vector)})
        return out

    @classmethod
    def from_ranges(cls, ranges: dict, fixed: dict | None = None) -> "ParameterSpace":
        dims = tuple(Dimension(k, float(lo), float(hi)) for k, (lo, hi) in ranges.items())
        return cls(dims, dict(fixed or {}))


# Explored ranges and fixed values of the two models.
BH_RANGES = {
    "beta": (0.0, 10.0),
    "b1": (-2.0, 2.0),
    "b2": (-2.0, 2.0),
    "g1": (-2.0, 2.0),
    "g2": (-2.0, 2.0),
    "cost": (0.0, 5.0),
    "omega": (0.0, 1.0),
    "sigma": (0.0, 1.0),
    "nu": (0.0, 100.0),
    "r_gross": (1.01, 1.1),
}
BH_FIXED = {"n1_init": 0.5, "horizon": 500}

ISLANDS_RANGES = {
    "rho": (0.0, 10.0),
    "alpha": (0.8, 2.0),
    "phi": (0.0, 1.0),
    "pi": (0.0, 1.0),
    "epsilon": (0.0, 1.0),
}
ISLANDS_FIXED = {"lam": 1.0, "n_agents": 50, "horizon": 1000}


def bh_space() -> ParameterSpace:
    return ParameterSpace.from_ranges(BH_RANGES, BH_FIXED)


def islands_space() -> ParameterSpace:
    return ParameterSpace.from_ranges(ISLANDS_RANGES, ISLANDS_FIXED)


@lru_cache(maxsize=1)
def _direction_table() -> list[tuple[int, int, tuple[int, ...]]]:
    text = resources.files("abmsurrogate.data").joinpath("sobol_directions.txt").read_text()
    rows = []
    for line in text.splitlines()[1:]:
        parts = [int(v) for v in line.split()]
        if parts:
            rows.append((parts[1], parts[2], tuple(parts[3:])))
    return rows


def max_sobol_dimension() -> int:
    return len(_direction_table()) + 1


@lru_cache(maxsize=64)
def _direction_numbers(dimension: int) -> np.ndarray:
    """(dimension, 32) uint64 direction numbers, already shifted into place."""
    if dimension > max_sobol_dimension():
        raise UnsupportedDimensionError(
            f"Sobol dimension {dimension} exceeds table size {max_sobol_dimension()}"
        )
    V = np.zeros((dimension, _BITS), dtype=np.uint64)
    V[0] = [1 << (_BITS - 1 - k) for k in range(_BITS)]
    for j in range(1, dimension):
        s, a, m = _direction_table()[j - 1]
        v = [m[k] << (_BITS - 1 - k) for k in range(s)]
        for k in range(s, _BITS):
            nxt = v[k - s] ^ (v[k - s] >> s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    nxt ^= v[k - i]
            v.append(nxt)
        V[j] = v
    return V


def sobol_unit(dimension: int, count: int, skip: int = 0, shift_seed: int | None = None) -> np.ndarray:
    """Points ``skip .. skip+count-1`` of the Sobol sequence in [0, 1)^dimension.

    Points are computed directly from their Gray-code index, so any window of
    the sequence costs the same.  ``shift_seed`` applies a random digital
    (XOR) shift, which preserves the low-discrepancy structure.
    """
    if dimension < 1 or count < 0 or skip < 0:
        raise ValueError("dimension must be >= 1, count and skip >= 0")
    V = _direction_numbers(dimension)
    idx = np.arange(skip, skip + count, dtype=np.uint64)
    if count and int(idx[-1]) >= 2**_BITS:
        raise ValueError("Sobol index exceeds 2**32")
    gray = idx ^ (idx >> np.uint64(1))
    X = np.zeros((count, dimension), dtype=np.uint64)
    for b in range(_BITS):
        bit = ((gray >> np.uint64(b)) & np.uint64(1)).astype(bool)
        if not bit.any():
            continue
        X[bit] ^= V[:, b]
    if shift_seed is not None:
        rng = np.random.default_rng(shift_seed)
        X ^= rng.integers(0, 2**_BITS, size=dimension, dtype=np.uint64)
    return X.astype(np.float64) * _SCALE


def scale_to_space(unit_points, space: ParameterSpace) -> np.ndarray:
    u = np.atleast_2d(np.asarray(unit_points, dtype=float))
    if u.shape[1] != len(space):
        raise ValueError(f"unit points have {u.shape[1]} columns, space has {len(space)} dims")
    lo, hi = space.lower, space.upper
    return lo + u * (hi - lo)


def draw_pool(space: ParameterSpace, size: int, scheme: str = "sobol", seed: int = 0) -> np.ndarray:
    """Draw ``size`` distinct in-box candidates.

    ``sobol`` skips the all-zeros index-0 point and digitally shifts the
    sequence by ``seed``; ``uniform`` uses a PCG64 stream seeded by ``seed``.
    """
    if size < 1:
        raise ValueError("pool size must be >= 1")
    d = len(space)
    if scheme == "sobol":
        unit = sobol_unit(d, size, skip=1, shift_seed=seed)
    elif scheme == "uniform":
        unit = np.random.default_rng(seed).random((size, d))
    else:
        raise ValueError(f"unknown sampling scheme {scheme!r}")
    return scale_to_space(unit, space)


def write_pool_csv(path, pool: np.ndarray, space: ParameterSpace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", *space.names])
        for i, row in enumerate(pool):
            w.writerow([i, *(repr(float(v)) for v in row)])


def read_pool_csv(path, space: ParameterSpace | None = None) -> np.ndarray:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return np.empty((0, len(space) if space else 0))
    header, body = rows[0], rows[1:]
    names = header[1:] if header and header[0] == "index" else header
    if space is not None and names != space.names:
        raise ValueError(f"pool columns {names} do not match space {space.names}")
    offset = 1 if header and header[0] == "index" else 0
    if not body:
        return np.empty((0, len(names)))
    return np.array([[float(v) for v in r[offset:]] for r in body])

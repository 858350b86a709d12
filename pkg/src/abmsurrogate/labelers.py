"""True-model evaluators: map parameter vectors to calibration label values.

A labeler is a picklable object so pools can be labeled across worker
processes.  Results are always merged back in pool order.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .brock_hommes import BHParams, bh_simulate
from .criteria import (
    AGR_GROWTH_ONLY,
    B_SENTINEL,
    BURN_IN,
    FAT_TAIL_B,
    KS_LEVEL,
    avg_growth_rate,
    bh_label,
    islands_label,
    load_reference_returns,
)
from .islands import IslandParams, islands_simulate
from .sampling import (
    BH_FIXED,
    BH_RANGES,
    ISLANDS_FIXED,
    ISLANDS_RANGES,
    ParameterSpace,
    bh_space,
    islands_space,
)

AGR_FLOOR = -1.0


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


@dataclass(frozen=True)
class PositiveSet:
    """Which label values count as positive calibrations.

    Binary labels are positive when equal to 1.  Real labels compare to
    ``threshold`` in the given ``direction`` (``above`` is strict, ``below``
    is inclusive, matching the criteria they encode).
    """

    kind: str = "binary"
    threshold: float = 0.5
    direction: str = "above"

    def __post_init__(self):
        if self.kind not in ("binary", "real"):
            raise ValueError(f"unknown label kind {self.kind!r}")
        if self.direction not in ("above", "below"):
            raise ValueError(f"direction must be 'above' or 'below', got {self.direction!r}")

    def contains(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.kind == "binary":
            return v == 1.0
        return v > self.threshold if self.direction == "above" else v <= self.threshold

    def signed_distance(self, values) -> np.ndarray:
        """Positive on the positive side of the threshold."""
        v = np.asarray(values, dtype=float)
        return v - self.threshold if self.direction == "above" else self.threshold - v


class Labeler:
    space: ParameterSpace
    positive: PositiveSet
    negative_value: float = 0.0

    @property
    def kind(self) -> str:
        return self.positive.kind

    def label_one(self, vector) -> float:
        raise NotImplementedError

    def safe_label(self, vector) -> float:
        # evaluation failures count as negatives, never abort a run
        try:
            v = float(self.label_one(vector))
        except (ValueError, ArithmeticError, OverflowError):
            return self.negative_value
        return v if math.isfinite(v) else self.negative_value

    def label_many(self, points, jobs: int = 1) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) == 0:
            return np.empty(0)
        if jobs <= 1 or len(pts) == 1:
            return np.array([self.safe_label(p) for p in pts])
        chunk = max(1, len(pts) // (4 * jobs))
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return np.array(list(ex.map(self.safe_label, list(pts), chunksize=chunk)))


@dataclass
class BHLabeler(Labeler):
    """KS test of simulated returns against a reference return sample."""

    kind_: str = "binary"
    noise: float = 0.5
    abm_seed: int = 0
    reference_path: str | None = None
    fixed: dict = field(default_factory=dict)
    space: ParameterSpace = field(default_factory=bh_space)
    reference: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.reference = load_reference_returns(self.reference_path)
        if self.kind_ == "binary":
            self.positive = PositiveSet("binary")
        else:
            self.positive = PositiveSet("real", KS_LEVEL, "above")
        self.negative_value = 0.0

    def params(self, vector) -> BHParams:
        values = self.space.as_dict(vector)
        values.update(self.fixed)
        values.setdefault("noise", self.noise)
        return BHParams.from_mapping(values)

    def label_one(self, vector) -> float:
        series = bh_simulate(self.params(vector), seed=self.abm_seed)
        return bh_label(series, self.reference, self.kind_).value


@dataclass
class IslandsLabeler(Labeler):
    """Growth (and optionally fat-tail) criterion on simulated GDP.

    With ``mc_size > 1`` the growth-only criterion is applied to the average
    growth rate over ``mc_size`` simulation seeds.
    """

    kind_: str = "binary"
    mode: str = "growth_and_tails"
    mc_size: int = 1
    abm_seed: int = 0
    agr_threshold: float | None = None
    b_threshold: float = FAT_TAIL_B
    burn_in: int = BURN_IN
    fixed: dict = field(default_factory=dict)
    space: ParameterSpace = field(default_factory=islands_space)

    def __post_init__(self):
        if self.mc_size < 1:
            raise ValueError("mc_size must be >= 1")
        if self.mc_size > 1 and self.mode != "growth_only":
            raise ValueError("Monte Carlo averaging is only defined for the growth_only criterion")
        if self.mode == "growth_only":
            thr = AGR_GROWTH_ONLY if self.agr_threshold is None else self.agr_threshold
            self.positive = (PositiveSet("binary") if self.kind_ == "binary"
                             else PositiveSet("real", thr, "above"))
            self.negative_value = 0.0 if self.kind_ == "binary" else AGR_FLOOR
        elif self.mode == "growth_and_tails":
            self.positive = (PositiveSet("binary") if self.kind_ == "binary"
                             else PositiveSet("real", self.b_threshold, "below"))
            self.negative_value = 0.0 if self.kind_ == "binary" else B_SENTINEL
        else:
            raise ValueError(f"unknown islands criterion mode {self.mode!r}")

    def params(self, vector) -> IslandParams:
        values = self.space.as_dict(vector)
        values.update(self.fixed)
        return IslandParams.from_mapping(values)

    def label_one(self, vector) -> float:
        p = self.params(vector)
        if self.mc_size == 1:
            gdp = islands_simulate(p, seed=self.abm_seed).gdp
            lab = islands_label(gdp, self.kind_, self.mode, self.burn_in, self.agr_threshold, self.b_threshold)
            if self.mode == "growth_only" and self.kind_ == "real":
                return max(lab.value, AGR_FLOOR)
            return lab.value
        agrs = [avg_growth_rate(islands_simulate(p, seed=self.abm_seed + k).gdp) for k in range(self.mc_size)]
        mean_agr = max(float(np.mean(agrs)), AGR_FLOOR)
        if self.kind_ == "real":
            return mean_agr
        thr = AGR_GROWTH_ONLY if self.agr_threshold is None else self.agr_threshold
        return 1.0 if mean_agr > thr else 0.0


def synthetic_space(dimension: int = 5) -> ParameterSpace:
    return ParameterSpace.from_ranges({f"x{i}": (0.0, 1.0) for i in range(dimension)})


@dataclass
class SyntheticLabeler(Labeler):
    """Cheap built-in test model: positives fill an axis-aligned square.

    The square lies in the first two coordinates, centred at ``center`` with
    area ``rate``, so the positive share of a uniform pool is ``rate``.  The
    real label is the Chebyshev distance to the centre in units of the
    half-side; positive when <= 1.
    """

    kind_: str = "binary"
    rate: float = 0.01
    dimension: int = 5
    center: tuple = (0.3, 0.6)
    space: ParameterSpace = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ValueError("rate must lie in (0, 1]")
        if self.dimension < 2:
            raise ValueError("synthetic model needs at least two dimensions")
        self.space = synthetic_space(self.dimension)
        self.half = 0.5 * math.sqrt(self.rate)
        if self.rate < 1.0:
            for c in self.center:
                if c - self.half < 0 or c + self.half > 1:
                    raise ValueError("positive square must fit inside the unit box")
        self.positive = (PositiveSet("binary") if self.kind_ == "binary"
                         else PositiveSet("real", 1.0, "below"))
        self.negative_value = 0.0 if self.kind_ == "binary" else 1e3

    def distance(self, vector) -> float:
        if self.rate >= 1.0:
            return 0.0
        return max(abs(vector[0] - self.center[0]), abs(vector[1] - self.center[1])) / self.half

    def label_one(self, vector) -> float:
        d = self.distance(vector)
        if self.kind_ == "real":
            return d
        return 1.0 if d <= 1.0 else 0.0


def model_space(model: str, ranges: dict | None = None, fixed: dict | None = None) -> ParameterSpace:
    """Default explored box of ``model`` with optional per-parameter overrides."""
    defaults = {"bh": (BH_RANGES, BH_FIXED), "islands": (ISLANDS_RANGES, ISLANDS_FIXED)}
    if model not in defaults:
        raise ValueError(f"no default parameter space for {model!r}")
    base_ranges, base_fixed = defaults[model]
    r = dict(base_ranges)
    r.update({k: tuple(v) for k, v in (ranges or {}).items()})
    f = dict(base_fixed)
    f.update(fixed or {})
    return ParameterSpace.from_ranges(r, f)


def make_labeler(model: str, **kwargs) -> Labeler:
    """Labeler for ``bh``, ``islands`` or ``synthetic`` with keyword options.

    ``ranges`` and ``space_fixed`` override the default parameter space;
    ``direction`` flips which side of a real-valued threshold is positive.
    """
    kind = kwargs.pop("kind", "binary")
    direction = kwargs.pop("direction", None)
    ranges = kwargs.pop("ranges", None)
    space_fixed = kwargs.pop("space_fixed", None)
    if model in ("bh", "islands") and (ranges or space_fixed):
        kwargs["space"] = model_space(model, ranges, space_fixed)
    if model == "bh":
        lab = BHLabeler(kind_=kind, **kwargs)
    elif model == "islands":
        lab = IslandsLabeler(kind_=kind, **kwargs)
    elif model == "synthetic":
        lab = SyntheticLabeler(kind_=kind, **kwargs)
    else:
        raise ValueError(f"unknown model id {model!r}")
    if direction is not None and lab.kind == "real":
        lab.positive = PositiveSet("real", lab.positive.threshold, direction)
    return lab



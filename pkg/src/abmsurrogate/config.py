"""Run configuration: a TOML file with model, criterion, loop, surrogate and experiment sections.

Every value can be overridden from the environment with
``ABMSURROGATE__<SECTION>__<KEY>=<toml value>`` (nested keys joined by
``__``).  Errors name the offending field path, e.g. ``loop.budget``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .active import LoopConfig
from .criteria import BURN_IN, FAT_TAIL_B
from .harness import ExperimentPlan
from .labelers import Labeler, make_labeler
from .sampling import BH_FIXED, BH_RANGES, ISLANDS_FIXED, ISLANDS_RANGES, ParameterSpace

ENV_PREFIX = "ABMSURROGATE__"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


_NUM = (int, float)
SCHEMA = {
    "model": {"id": str, "fixed": dict, "ranges": dict},
    "criterion": {
        "kind": str, "reference": str, "burn_in": int, "mode": str, "agr_threshold": _NUM,
        "b_threshold": _NUM, "mc_size": int, "abm_seed": int, "noise": _NUM, "rate": _NUM,
        "dimension": int, "threshold_direction": str,
    },
    "loop": {
        "budget": int, "n_seed": int, "pool_size": int, "batch_size": int, "c": _NUM,
        "pool_scheme": str, "refresh_pool": bool, "sampler_seed": int, "surrogate_seed": int,
    },
    "surrogate": {
        "family": str, "hpo_trials": int, "hpo_trials_late": int, "hpo_late_after": int,
        "hpo_folds": int, "platt": bool,
    },
    "experiment": {
        "name": str, "design": str, "budgets": list, "repetitions": int, "oos_size": int,
        "oos_seed": int, "seed": int, "mc_size": int, "families": list, "platt": bool, "pool_size": int,
    },
}
CHOICES = {
    "model.id": ("bh", "islands", "synthetic"),
    "criterion.kind": ("binary", "real"),
    "criterion.mode": ("growth_and_tails", "growth_only"),
    "criterion.threshold_direction": ("below", "above"),
    "loop.pool_scheme": ("sobol", "uniform"),
    "surrogate.family": ("boosted", "logit"),
    "experiment.design": ("sweep", "robustness"),
}
SUPPORTS = {"bh": BH_RANGES, "islands": ISLANDS_RANGES}
FIXED_DEFAULTS = {"bh": BH_FIXED, "islands": ISLANDS_FIXED}


def _parse_env_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_env_overrides(doc: dict, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in key[len(ENV_PREFIX):].split("__") if p]
        if len(parts) < 2:
            raise ConfigError(key, "environment override needs a section and a key")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(".".join(parts), "cannot override inside a non-table value")
        node[parts[-1]] = _parse_env_value(raw)
    return doc


def _check_types(doc: dict) -> None:
    for section, body in doc.items():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        if not isinstance(body, dict):
            raise ConfigError(section, "must be a table")
        for key, value in body.items():
            path = f"{section}.{key}"
            want = SCHEMA[section].get(key)
            if want is None:
                raise ConfigError(path, "unknown field")
            if isinstance(value, bool) and want is not bool:
                raise ConfigError(path, f"expected {_type_name(want)}, got a boolean")
            if want is float or want == _NUM:
                ok = isinstance(value, _NUM)
            else:
                ok = isinstance(value, want)
            if not ok:
                raise ConfigError(path, f"expected {_type_name(want)}, got {type(value).__name__}")
            if path in CHOICES and value not in CHOICES[path]:
                raise ConfigError(path, f"must be one of {', '.join(CHOICES[path])}")


def _type_name(t) -> str:
    return "number" if t == _NUM else t.__name__


@dataclass
class RunConfig:
    model: str
    fixed: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    criterion: dict = field(default_factory=dict)
    loop: dict = field(default_factory=dict)
    surrogate: dict = field(default_factory=dict)
    experiment: dict | None = None

    def space(self) -> ParameterSpace:
        return self.labeler().space

    def labeler_options(self) -> dict:
        """Keyword options for ``make_labeler``; plain data so plans can be serialised."""
        c = self.criterion
        opts = {}
        if "threshold_direction" in c:
            opts["direction"] = c["threshold_direction"]
        if self.model == "synthetic":
            opts.update({k: c[k] for k in ("rate", "dimension") if k in c})
            return opts
        opts["abm_seed"] = c.get("abm_seed", 0)
        if self.ranges:
            opts["ranges"] = {k: list(v) for k, v in self.ranges.items()}
        space_fixed = {k: v for k, v in self.fixed.items() if k in FIXED_DEFAULTS[self.model]}
        if space_fixed:
            opts["space_fixed"] = space_fixed
        extra = {k: v for k, v in self.fixed.items() if k not in FIXED_DEFAULTS[self.model]}
        if extra:
            opts["fixed"] = extra
        if self.model == "bh":
            if "reference" in c:
                opts["reference_path"] = c["reference"]
            if "noise" in c:
                opts["noise"] = float(c["noise"])
        else:
            for k in ("mode", "mc_size", "agr_threshold", "b_threshold", "burn_in"):
                if k in c:
                    opts[k] = c[k]
        return opts

    def labeler(self, **extra) -> Labeler:
        opts = self.labeler_options()
        opts.update(extra)
        try:
            return make_labeler(self.model, kind=self.criterion.get("kind", "binary"), **opts)
        except FileNotFoundError as exc:
            raise ConfigError("criterion.reference", f"reference data not found ({exc.filename})") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError("criterion", str(exc)) from None

    def loop_config(self, **extra) -> LoopConfig:
        values = dict(self.loop)
        values.update(self.surrogate)
        values.update(extra)
        allowed = {f.name for f in fields(LoopConfig)}
        return LoopConfig(**{k: v for k, v in values.items() if k in allowed})

    def plan(self) -> ExperimentPlan:
        if self.experiment is None:
            raise ConfigError("experiment", "section missing")
        e = dict(self.experiment)
        opts = self.labeler_options()
        values = {
            "name": e.get("name", "experiment"),
            "model": self.model,
            "kind": self.criterion.get("kind", "binary"),
            "labeler_options": opts,
        }
        for k in ("repetitions", "oos_size", "oos_seed", "seed", "mc_size", "platt", "pool_size"):
            if k in e:
                values[k] = e[k]
        if "budgets" in e:
            values["budgets"] = tuple(int(b) for b in e["budgets"])
        if "families" in e:
            values["families"] = tuple(e["families"])
        for k in ("n_seed", "pool_scheme", "refresh_pool", "c"):
            if k in self.loop:
                values[k] = self.loop[k]
        if "pool_size" not in e and "pool_size" in self.loop:
            values["pool_size"] = self.loop["pool_size"]
        for k in ("hpo_trials", "hpo_trials_late", "hpo_late_after", "hpo_folds"):
            if k in self.surrogate:
                values[k] = self.surrogate[k]
        try:
            return ExperimentPlan(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError("experiment", str(exc)) from None

    @property
    def design(self) -> str:
        return (self.experiment or {}).get("design", "sweep")


def _validate(cfg: RunConfig) -> None:
    if cfg.model in SUPPORTS:
        support = SUPPORTS[cfg.model]
        for name, rng in cfg.ranges.items():
            path = f"model.ranges.{name}"
            if name not in support:
                raise ConfigError(path, "not an explored parameter of this model")
            if not (isinstance(rng, list) and len(rng) == 2 and all(isinstance(v, _NUM) for v in rng)):
                raise ConfigError(path, "expected [lower, upper]")
            lo, hi = support[name]
            if not lo <= rng[0] < rng[1] <= hi:
                raise ConfigError(path, f"must satisfy {lo} <= lower < upper <= {hi}")
    elif cfg.ranges:
        raise ConfigError("model.ranges", "the synthetic model has a fixed unit box")
    try:
        cfg.loop_config() if "budget" in cfg.loop else None
    except ValueError as exc:
        raise ConfigError("loop", str(exc)) from None
    if "budget" in cfg.loop and "n_seed" in cfg.loop and cfg.loop["budget"] < cfg.loop["n_seed"]:
        raise ConfigError("loop.budget", "must be at least loop.n_seed")
    c = cfg.criterion
    if c.get("mc_size", 1) < 1:
        raise ConfigError("criterion.mc_size", "must be >= 1")
    if c.get("burn_in", BURN_IN) < 0:
        raise ConfigError("criterion.burn_in", "must be non-negative")
    if c.get("b_threshold", FAT_TAIL_B) <= 0:
        raise ConfigError("criterion.b_threshold", "must be positive")
    cfg.labeler()
    if cfg.experiment is not None:
        cfg.plan()


def from_dict(doc: dict) -> RunConfig:
    _check_types(doc)
    model = doc.get("model", {})
    if "id" not in model:
        raise ConfigError("model.id", "required")
    cfg = RunConfig(
        model=model["id"],
        fixed=dict(model.get("fixed", {})),
        ranges=dict(model.get("ranges", {})),
        criterion=dict(doc.get("criterion", {})),
        loop=dict(doc.get("loop", {})),
        surrogate=dict(doc.get("surrogate", {})),
        experiment=dict(doc["experiment"]) if "experiment" in doc else None,
    )
    _validate(cfg)
    return cfg


def load_config(path, environ=None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(str(path), "file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML ({exc})") from None
    return from_dict(apply_env_overrides(doc, environ))

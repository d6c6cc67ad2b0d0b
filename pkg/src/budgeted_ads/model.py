"""Problem instances for budgeted pay-per-click ad allocation.

Arms are kept in canonical order, non-increasing in value per impression
``w_i = b_i * mu_i``, and all public arm indices are 1-based in that order.
The caller's original positions travel with the instance so results can be
mapped back.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np


class InstanceError(ValueError):
    """Raised when instance data violates a model invariant."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ArmSpec:
    ctr: float
    payment_per_click: float
    budget: float

    def __post_init__(self) -> None:
        problems = _arm_problems(self.ctr, self.payment_per_click, self.budget, None)
        if problems:
            raise InstanceError(problems)

    @property
    def value(self) -> float:
        return value_per_impression(self)


def _arm_problems(ctr: Any, pay: Any, budget: Any, position: int | None) -> list[str]:
    where = "" if position is None else f" at arm {position}"
    out = []
    for name, v in (("ctr", ctr), ("payment_per_click", pay), ("budget", budget)):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            out.append(f"{name} must be a finite number{where}")
    if out:
        return out
    if not 0.0 <= ctr <= 1.0:
        out.append(f"ctr out of [0,1]{where}")
    if not pay > 0.0:
        out.append(f"payment_per_click must be > 0{where}")
    if not budget >= 0.0:
        out.append(f"budget must be >= 0{where}")
    return out


def value_per_impression(arm: ArmSpec) -> float:
    """Expected revenue of one impression, ``b * mu``."""
    return arm.payment_per_click * arm.ctr


def canonicalize(arms: Sequence[ArmSpec]) -> list[int]:
    """1-based original indices of ``arms`` sorted by non-increasing value.

    Ties keep input order.
    """
    if not arms:
        raise InstanceError(["at least one arm is required"])
    # sorted() is stable, so negating the key keeps ties in input order
    order = sorted(range(len(arms)), key=lambda i: -value_per_impression(arms[i]))
    return [i + 1 for i in order]


@dataclass(frozen=True)
class DerivedInstanceStats:
    values_per_impression: tuple[float, ...]
    gaps: tuple[float, ...]
    v_squared: float


@dataclass(frozen=True)
class ProblemInstance:
    """Arms in canonical order plus the horizon ``T``.

    Build from arbitrary order with :meth:`from_arms`; the direct constructor
    expects arms already canonical and checks it.
    ``original_index[i]`` is the caller's 1-based position of canonical arm
    ``i + 1``.
    """

    arms: tuple[ArmSpec, ...]
    horizon: int
    original_index: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "arms", tuple(self.arms))
        if not self.original_index:
            object.__setattr__(self, "original_index", tuple(range(1, len(self.arms) + 1)))
        else:
            object.__setattr__(self, "original_index", tuple(int(i) for i in self.original_index))
        problems = []
        if not self.arms:
            problems.append("at least one arm is required")
        if isinstance(self.horizon, bool) or not isinstance(self.horizon, (int, np.integer)) or self.horizon < 1:
            problems.append("horizon must be an integer >= 1")
        if sorted(self.original_index) != list(range(1, len(self.arms) + 1)):
            problems.append("original_index must be a permutation of 1..k")
        w = [value_per_impression(a) for a in self.arms]
        if any(w[i] < w[i + 1] for i in range(len(w) - 1)):
            problems.append("arms are not in canonical (non-increasing w) order")
        if problems:
            raise InstanceError(problems)
        object.__setattr__(self, "horizon", int(self.horizon))

    @classmethod
    def from_arms(cls, arms: Sequence[ArmSpec], horizon: int) -> "ProblemInstance":
        order = canonicalize(arms)
        return cls(tuple(arms[i - 1] for i in order), horizon, tuple(order))

    @property
    def k(self) -> int:
        return len(self.arms)

    @cached_property
    def ctr(self) -> np.ndarray:
        return np.array([a.ctr for a in self.arms], dtype=np.float64)

    @cached_property
    def payment(self) -> np.ndarray:
        return np.array([a.payment_per_click for a in self.arms], dtype=np.float64)

    @cached_property
    def budget(self) -> np.ndarray:
        return np.array([a.budget for a in self.arms], dtype=np.float64)

    @cached_property
    def w(self) -> np.ndarray:
        return np.array([value_per_impression(a) for a in self.arms], dtype=np.float64)

    @cached_property
    def stats(self) -> DerivedInstanceStats:
        w = tuple(float(x) for x in self.w)
        gaps = tuple(w[i] - w[i + 1] for i in range(len(w) - 1))
        v2 = sum(a.payment_per_click ** 2 for a in self.arms) / self.k
        return DerivedInstanceStats(w, gaps, v2)

    def with_horizon(self, horizon: int) -> "ProblemInstance":
        return ProblemInstance(self.arms, horizon, self.original_index)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "arms": [
                {
                    "ctr": a.ctr,
                    "payment_per_click": a.payment_per_click,
                    "budget": a.budget,
                    "original_index": o,
                }
                for a, o in zip(self.arms, self.original_index)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def gap(instance: ProblemInstance, i: int) -> float:
    """``w_i - w_{i+1}`` for canonical ``1 <= i <= k - 1``."""
    if not 1 <= i <= instance.k - 1:
        raise IndexError(f"gap index {i} out of range 1..{instance.k - 1}")
    return instance.stats.gaps[i - 1]


_ARM_KEYS = {"ctr", "payment_per_click", "budget", "original_index"}


def validate_instance(raw: Any) -> tuple[ProblemInstance | None, list[str]]:
    """Check raw JSON-like data; return ``(instance, [])`` or ``(None, problems)``.

    Arms are read in list order unless every arm carries ``original_index``
    (as written by :meth:`ProblemInstance.to_dict`), in which case those
    positions define the caller's order.
    """
    problems: list[str] = []
    if not isinstance(raw, Mapping):
        return None, ["instance must be a JSON object"]
    for key in raw:
        if key not in ("horizon", "arms"):
            problems.append(f"unknown key {key!r}")
    horizon = raw.get("horizon")
    if horizon is None:
        problems.append("missing horizon")
    elif isinstance(horizon, bool) or not isinstance(horizon, int) or horizon < 1:
        problems.append("horizon must be an integer >= 1")
    arms_raw = raw.get("arms")
    if not isinstance(arms_raw, list) or not arms_raw:
        problems.append("arms must be a non-empty list")
        return None, problems

    arms: list[ArmSpec] = []
    origs: list[Any] = []
    for pos, a in enumerate(arms_raw, start=1):
        if not isinstance(a, Mapping):
            problems.append(f"arm {pos} must be an object")
            continue
        extra = set(a) - _ARM_KEYS
        if extra:
            problems.append(f"unknown key(s) {sorted(extra)} at arm {pos}")
        missing = [key for key in ("ctr", "payment_per_click", "budget") if key not in a]
        if missing:
            problems.append(f"missing {', '.join(missing)} at arm {pos}")
            continue
        arm_problems = _arm_problems(a["ctr"], a["payment_per_click"], a["budget"], pos)
        if arm_problems:
            problems.extend(arm_problems)
            continue
        arms.append(ArmSpec(float(a["ctr"]), float(a["payment_per_click"]), float(a["budget"])))
        origs.append(a.get("original_index"))
    if problems:
        return None, problems

    if all(o is None for o in origs):
        return ProblemInstance.from_arms(arms, horizon), []
    if any(o is None for o in origs) or sorted(origs) != list(range(1, len(arms) + 1)):
        return None, ["original_index must be given for all arms and form a permutation of 1..k"]
    by_original = [None] * len(arms)
    for arm, o in zip(arms, origs):
        by_original[o - 1] = arm
    return ProblemInstance.from_arms(by_original, horizon), []


def parse_instance(raw: Any) -> ProblemInstance:
    instance, problems = validate_instance(raw)
    if instance is None:
        raise InstanceError(problems)
    return instance


def load_instance(path) -> ProblemInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(json.load(fh))


def dump_instance(instance: ProblemInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(instance.to_json())
        fh.write("\n")


# -- random instance families ------------------------------------------------

def _uniform(cfg: Mapping[str, Any], seed: int) -> list[ArmSpec]:
    k = int(cfg["k"])
    b_lo, b_hi = float(cfg.get("b_lo", 0.5)), float(cfg.get("b_hi", 2.0))
    B_lo, B_hi = float(cfg.get("B_lo", 0.0)), float(cfg.get("B_hi", 100.0))
    if k < 1:
        raise InstanceError(["k must be >= 1"])
    if not 0 < b_lo <= b_hi:
        raise InstanceError(["need 0 < b_lo <= b_hi"])
    if not 0 <= B_lo <= B_hi:
        raise InstanceError(["need 0 <= B_lo <= B_hi"])
    rng = np.random.default_rng(seed)
    mu = rng.uniform(0.0, 1.0, k)
    b = rng.uniform(b_lo, b_hi, k)
    B = rng.uniform(B_lo, B_hi, k)
    return [ArmSpec(float(m), float(p), float(q)) for m, p, q in zip(mu, b, B)]


def _two_gap(cfg: Mapping[str, Any], seed: int) -> list[ArmSpec]:
    # arms cluster at a few value levels; the spacing between levels sets the gaps
    levels = [float(x) for x in cfg.get("levels", (0.8, 0.2))]
    per_level = int(cfg.get("arms_per_level", 2))
    jitter = float(cfg.get("jitter", 0.0))
    b_lo, b_hi = float(cfg.get("b_lo", 1.0)), float(cfg.get("b_hi", 1.0))
    B_lo, B_hi = float(cfg.get("B_lo", 0.0)), float(cfg.get("B_hi", 100.0))
    if per_level < 1 or not levels:
        raise InstanceError(["need at least one level and arms_per_level >= 1"])
    if not 0 < b_lo <= b_hi:
        raise InstanceError(["need 0 < b_lo <= b_hi"])
    if not 0 <= B_lo <= B_hi:
        raise InstanceError(["need 0 <= B_lo <= B_hi"])
    if jitter < 0 or any(lv - jitter < 0 or lv + jitter > b_lo for lv in levels):
        raise InstanceError(["every level +/- jitter must lie in [0, b_lo] so ctr stays in [0,1]"])
    rng = np.random.default_rng(seed)
    arms = []
    for lv in levels:
        for _ in range(per_level):
            w = lv + rng.uniform(-jitter, jitter) if jitter else lv
            b = float(rng.uniform(b_lo, b_hi))
            B = float(rng.uniform(B_lo, B_hi))
            arms.append(ArmSpec(min(1.0, w / b), b, B))
    return arms


def _deterministic(cfg: Mapping[str, Any], seed: int) -> list[ArmSpec]:
    mu, b, B = cfg["ctr"], cfg["payment_per_click"], cfg["budget"]
    if not len(mu) == len(b) == len(B):
        raise InstanceError(["ctr, payment_per_click and budget must have equal length"])
    return [ArmSpec(float(m), float(p), float(q)) for m, p, q in zip(mu, b, B)]


FAMILIES = {"uniform": _uniform, "two-gap": _two_gap, "deterministic": _deterministic}


def generate_instance(spec: Mapping[str, Any], seed: int = 0) -> ProblemInstance:
    """Build an instance from a generator config.

    ``spec["family"]`` selects ``uniform``, ``two-gap`` or ``deterministic``;
    ``spec["horizon"]`` is required.  The same ``(spec, seed)`` always yields
    the same instance.
    """
    family = spec.get("family")
    if family not in FAMILIES:
        raise InstanceError([f"unknown generator family {family!r}"])
    if "horizon" not in spec:
        raise InstanceError(["generator config needs a horizon"])
    return ProblemInstance.from_arms(FAMILIES[family](spec, seed), int(spec["horizon"]))

"""Config-driven replicated experiments and their CSV output.

Every (policy, T) cell runs R coupled replications; replication ``r`` at
horizon ``T`` uses seed ``derive_seed(base_seed, T, r)`` whatever the policy,
so policies in one file share their randomness and growing R keeps the
earlier replications unchanged.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_C_LOG, DEFAULT_COR_A, DEFAULT_COR_B, bound_report, check_coupling_lemma,
    check_ucb_trick, ib_histogram, mean_and_se,
)
from .engine import run_coupled
from .model import ProblemInstance, generate_instance, load_instance, parse_instance
from .policy import PolicySpec
from .realization import HASH_VERSION, derive_seed

BATTERY = ("large_gap", "small_gap", "no_budget", "single_arm", "identical", "exhaust_all")


class ConfigError(ValueError):
    pass


def battery_instance(name: str) -> ProblemInstance:
    if name not in BATTERY:
        raise ConfigError(f"unknown battery instance {name!r}; expected one of {BATTERY}")
    text = resources.files("budgeted_ads").joinpath("battery", f"{name}.json").read_text("utf-8")
    return parse_instance(json.loads(text))


def resolve_instance(source: Any, base_dir: Path | None = None) -> ProblemInstance:
    """Instance from a path, ``battery:<name>``, a generator spec, or inline data."""
    if isinstance(source, str):
        if source.startswith("battery:"):
            return battery_instance(source.split(":", 1)[1])
        path = Path(source)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_instance(path)
    if isinstance(source, Mapping):
        if "generator" in source:
            extra = set(source) - {"generator", "seed"}
            if extra:
                raise ConfigError(f"unknown key(s) in generated instance: {sorted(extra)}")
            return generate_instance(source["generator"], int(source.get("seed", 0)))
        return parse_instance(source)
    raise ConfigError("instance must be a path, 'battery:<name>', a generator spec or an inline instance")


@dataclass
class ExperimentConfig:
    instance_source: Any
    instance: ProblemInstance
    horizons: list[int]
    replications: int
    policies: list[PolicySpec] = field(default_factory=lambda: [PolicySpec()])
    base_seed: int = 0
    out: str | None = None
    diagnostics: bool = False
    workers: int = 1
    c_log: float = DEFAULT_C_LOG
    cor_a_constant: float = DEFAULT_COR_A
    cor_b_constant: float = DEFAULT_COR_B

    def __post_init__(self) -> None:
        problems = []
        if not self.horizons:
            problems.append("horizons must be non-empty")
        if any(isinstance(T, bool) or not isinstance(T, int) or T < 1 for T in self.horizons):
            problems.append("every horizon must be an integer >= 1")
        elif any(a >= b for a, b in zip(self.horizons, self.horizons[1:])):
            problems.append("horizons must be strictly increasing")
        if isinstance(self.replications, bool) or not isinstance(self.replications, int) \
                or self.replications < 1:
            problems.append("replications must be an integer >= 1")
        if not self.policies:
            problems.append("at least one policy is required")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        for p in self.policies:
            if p.kind == "fixed_arm" and p.fixed_arm > self.instance.k:
                problems.append(f"fixed_arm:{p.fixed_arm} exceeds k={self.instance.k}")
        if problems:
            raise ConfigError("; ".join(problems))

    def resolved(self) -> dict:
        """Everything that determines the CSV body, as plain JSON data."""
        return {
            "instance": self.instance.to_dict(),
            "horizons": list(self.horizons),
            "replications": self.replications,
            "policies": [
                {"kind": p.kind, "ucb_constant": p.ucb_constant, "fixed_arm": p.fixed_arm}
                for p in self.policies
            ],
            "seed": self.base_seed,
            "diagnostics": self.diagnostics,
            "c_log": self.c_log,
            "cor_a_constant": self.cor_a_constant,
            "cor_b_constant": self.cor_b_constant,
        }


_KEYS = {
    "instance", "horizons", "replications", "policies", "ucb_constant", "seed", "out",
    "diagnostics", "workers", "c_log", "cor_a_constant", "cor_b_constant",
}
_REQUIRED = ("instance", "horizons", "replications")


def _policy_from(entry: Any, default_c: float) -> PolicySpec:
    if isinstance(entry, str):
        return PolicySpec.parse(entry, default_c)
    if isinstance(entry, Mapping):
        extra = set(entry) - {"kind", "ucb_constant", "fixed_arm"}
        if extra:
            raise ConfigError(f"unknown policy key(s) {sorted(extra)}")
        return PolicySpec(entry.get("kind", "budgeted_ucb"),
                          float(entry.get("ucb_constant", default_c)),
                          int(entry.get("fixed_arm", 0)))
    raise ConfigError(f"cannot read policy {entry!r}")


def parse_config(path: str | os.PathLike | None = None, overrides: Mapping[str, Any] | None = None,
                 raw: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """Read a JSON config (strict keys) and apply command-line overrides.

    ``overrides`` uses the same key names as the file; ``None`` values are
    ignored, anything else wins over the file.
    """
    data: dict[str, Any] = {}
    base_dir = None
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        base_dir = Path(path).resolve().parent
    if raw is not None:
        data.update(raw)
    unknown = sorted(set(data) - _KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key, value in (overrides or {}).items():
        if key not in _KEYS:
            raise ConfigError(f"unknown override {key!r}")
        if value is not None:
            data[key] = value
    missing = [k for k in _REQUIRED if k not in data]
    if missing:
        raise ConfigError(f"missing required field(s): {', '.join(missing)}")

    default_c = float(data.get("ucb_constant", 1.0))
    try:
        policies = [_policy_from(p, default_c) for p in data.get("policies", ["budgeted_ucb"])]
        if overrides and overrides.get("ucb_constant") is not None:
            c = float(overrides["ucb_constant"])
            policies = [PolicySpec(p.kind, c, p.fixed_arm) for p in policies]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return ExperimentConfig(
        instance_source=data["instance"],
        instance=resolve_instance(data["instance"], base_dir),
        horizons=list(data["horizons"]),
        replications=data["replications"],
        policies=policies,
        base_seed=int(data.get("seed", 0)),
        out=data.get("out"),
        diagnostics=bool(data.get("diagnostics", False)),
        workers=int(data.get("workers", 1)),
        c_log=float(data.get("c_log", DEFAULT_C_LOG)),
        cor_a_constant=float(data.get("cor_a_constant", DEFAULT_COR_A)),
        cor_b_constant=float(data.get("cor_b_constant", DEFAULT_COR_B)),
    )


# -- execution -----------------------------------------------------------------

@dataclass(frozen=True)
class RunRecord:
    replication: int
    regret: float
    reward: float
    i_b: int
    violations: int | None
    lemma4: bool | None
    lemma3: bool | None


def replicate(instance: ProblemInstance, policy: PolicySpec, base_seed: int,
              replications: Sequence[int], diagnostics: bool) -> list[RunRecord]:
    """Coupled runs for the given replication numbers at ``instance.horizon``."""
    T = instance.horizon
    ucb = policy.kind == "budgeted_ucb"
    out = []
    for r in replications:
        o = run_coupled(instance, derive_seed(base_seed, T, r), policy, diagnostics and ucb)
        violations = o.ucb_trace.confidence_violations
        lemma3 = None
        if violations is not None:
            lemma3 = all(check_ucb_trick(o.ucb_trace).values())
        out.append(RunRecord(
            r, o.regret_sample, o.ucb_trace.total_reward, o.last_exhausted, violations,
            check_coupling_lemma(o).passed if ucb else None, lemma3,
        ))
    return out


def _task(args):
    instance_dict, policy, base_seed, T, reps, diagnostics = args
    instance = parse_instance(instance_dict).with_horizon(T)
    return replicate(instance, policy, base_seed, reps, diagnostics)


def _chunks(n: int, parts: int) -> list[range]:
    size = max(1, math.ceil(n / parts))
    return [range(i, min(n, i + size)) for i in range(0, n, size)]


def _cell_row(config: ExperimentConfig, policy: PolicySpec, T: int,
              records: list[RunRecord]) -> tuple[dict, dict]:
    instance = config.instance.with_horizon(T)
    k = instance.k
    mean_regret, se_regret = mean_and_se([x.regret for x in records])
    mean_reward, _ = mean_and_se([x.reward for x in records])
    hist = ib_histogram((x.i_b for x in records), k)
    bounds = bound_report(instance, hist, config.c_log, config.cor_a_constant,
                          config.cor_b_constant)
    diag = [x for x in records if x.violations is not None]
    row = {
        "policy": policy.label,
        "T": T,
        "replications": len(records),
        "mean_regret": mean_regret,
        "se_regret": se_regret,
        "mean_reward": mean_reward,
        **{f"ib_hist_{i}": hist[i] for i in range(k + 1)},
        "conf_violation_rate": (sum(x.violations > 0 for x in diag) / len(diag)) if diag else "",
        "lemma4_pass": sum(bool(x.lemma4) for x in records) if policy.kind == "budgeted_ucb" else "",
        "lemma3_pass": sum(x.violations == 0 and x.lemma3 for x in diag) if diag else "",
        "thm1_rhs": bounds.theorem1_rhs,
        "cor_a": bounds.corollary_a,
        "cor_b": "" if bounds.corollary_b is None else bounds.corollary_b,
        "epsilon": bounds.epsilon,
        "delta": "" if bounds.delta is None else bounds.delta,
    }
    report = {"policy": policy.label, "T": T, "regret": {"mean": mean_regret, "se": se_regret},
              **bounds.to_dict()}
    return row, report


@dataclass
class ExperimentResult:
    columns: list[str]
    rows: list[dict]
    bounds: list[dict]
    config: ExperimentConfig

    def csv_body(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def header(self) -> str:
        lines = [
            f"budgeted_ads {__version__}",
            f"hash: {HASH_VERSION}",
            f"generated: {datetime.now(timezone.utc).isoformat(timespec='seconds')}",
            "config: " + json.dumps(self.config.resolved(), sort_keys=True),
        ]
        return "".join(f"# {line}\n" for line in lines)

    def write(self, path: str | os.PathLike) -> None:
        path = Path(path)
        _atomic_write(path, self.header() + self.csv_body())
        report = {"hash": HASH_VERSION, "config": self.config.resolved(), "cells": self.bounds}
        _atomic_write(path.with_suffix(".bounds.json"),
                      json.dumps(report, indent=2, sort_keys=True) + "\n")


def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "inf" if math.isinf(value) else repr(value)
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def csv_columns(k: int) -> list[str]:
    return [
        "policy", "T", "replications", "mean_regret", "se_regret", "mean_reward",
        *[f"ib_hist_{i}" for i in range(k + 1)],
        "conf_violation_rate", "lemma4_pass", "lemma3_pass", "thm1_rhs", "cor_a", "cor_b",
        "epsilon", "delta",
    ]


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run every (policy, T) cell; write CSV + bound report if ``config.out`` is set.

    Output is a pure function of the config: with several workers the
    replication chunks are gathered and sorted before aggregation.
    """
    instance_dict = config.instance.to_dict()
    tasks, keys = [], []
    parts = config.workers * 4 if config.workers > 1 else 1
    for pi, policy in enumerate(config.policies):
        for T in config.horizons:
            for reps in _chunks(config.replications, parts):
                tasks.append((instance_dict, policy, config.base_seed, T, list(reps),
                              config.diagnostics))
                keys.append((pi, T))

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]

    cells: dict[tuple[int, int], list[RunRecord]] = {}
    for key, chunk in zip(keys, results):
        cells.setdefault(key, []).extend(chunk)

    rows, reports = [], []
    for pi, policy in enumerate(config.policies):
        for T in config.horizons:
            records = sorted(cells[pi, T], key=lambda x: x.replication)
            row, report = _cell_row(config, policy, T, records)
            rows.append(row)
            reports.append(report)

    result = ExperimentResult(csv_columns(config.instance.k), rows, reports, config)
    if write and config.out:
        result.write(config.out)
    return result


def read_csv_body(path: str | os.PathLike) -> str:
    """CSV content with the ``#`` metadata block stripped."""
    with open(path, encoding="utf-8") as fh:
        return "".join(line for line in fh if not line.startswith("#"))

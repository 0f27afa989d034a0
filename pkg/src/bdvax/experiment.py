"""Scenario sweeps: (strategy, budget, timing, scenario) grids and figure tables.

Config files are flat ``key = value`` text; list values are comma separated and
``#`` starts a comment. Keys prefixed ``synth.`` override :class:`SynthConfig`
fields, keys prefixed ``params.`` override :class:`EpidemicParams` fields.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .analysis import TARGETS, index_ablation_study, learn_weights, pmap, read_weights
from .datamodel import EpidemicParams, World, load_world
from .engine import DETERMINISTIC, DIMENSIONS, ModelKind, SimulationResult, group_rates, run
from .errors import BDVaxError, ConfigError
from .indices import build_index_table
from .metrics import evaluate
from .strategies import DEFAULT_DAY, DIMENSION_OF, AcceptanceScenario, StrategyKind, make_plan
from .synthworld import SynthConfig, default_synth_config, generate_world

METRICS = ("utility_change", "equity_change_age", "equity_change_income",
           "equity_change_occupation", "overall_performance")
REFERENCES = ("none", "homogeneous")
COMPREHENSIVE = (StrategyKind.COMPREHENSIVE, StrategyKind.COMPREHENSIVE_ABLATION)


@dataclass(frozen=True)
class ExperimentConfig:
    strategies: tuple = ("homogeneous", "age", "income", "occupation")
    budgets: tuple = (0.1,)
    timings: tuple = (DEFAULT_DAY,)
    scenarios: tuple = ("none",)
    seeds: tuple = (0,)
    model: str = "bd"
    world: str | None = None
    synth: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    out: str = "experiment"
    weights: str | None = None
    ablation_weights: str | None = None
    learn_budget: float = 0.1
    n_candidates: int = 500
    regression_instances: int = 0
    regression_coverage: float = 0.02
    threads: int = 1

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("experiment: strategy list is empty")
        for s in self.strategies:
            StrategyKind.parse(s)
        for b in self.budgets:
            if not 0 <= b <= 1:
                raise ConfigError(f"experiment: budget {b} outside [0, 1]")
        for t in self.timings:
            if int(t) != t or t < 0:
                raise ConfigError(f"experiment: timing {t} must be a nonnegative integer")
        for s in self.scenarios:
            AcceptanceScenario.parse(s)
        ModelKind.parse(self.model)
        if not self.seeds:
            raise ConfigError("experiment: seed list is empty")

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        text = Path(path).read_text(encoding="utf-8")
        return cls.from_text(text, source=str(path), **overrides)

    @classmethod
    def from_text(cls, text: str, source: str = "<config>", **overrides) -> "ExperimentConfig":
        kw: dict = {"synth": {}, "params": {}}
        known = {f.name: f for f in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                if key.startswith("synth."):
                    kw["synth"][key[6:]] = _synth_value(key[6:], value)
                elif key.startswith("params."):
                    kw["params"][key[7:]] = float(value)
                elif key in _LIST_KEYS:
                    kw[key] = tuple(_LIST_KEYS[key](v.strip()) for v in value.split(",") if v.strip())
                elif key in _SCALAR_KEYS:
                    kw[key] = _SCALAR_KEYS[key](value)
                elif key in known:
                    raise ConfigError(f"{source}:{lineno}: key {key!r} cannot be set from a file")
                else:
                    raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def synth_config(self, seed: int) -> SynthConfig:
        params = EpidemicParams().with_values(**self.params) if self.params else EpidemicParams()
        return default_synth_config(**{**self.synth, "seed": int(seed), "params": params})


def _int_list(v):
    return int(v)


_LIST_KEYS = {"strategies": str, "budgets": float, "timings": _int_list, "scenarios": str,
              "seeds": _int_list}
_SCALAR_KEYS = {"model": str, "world": str, "out": str, "weights": str, "ablation_weights": str,
                "learn_budget": float, "n_candidates": int, "regression_instances": int,
                "regression_coverage": float, "threads": int}


def _synth_value(name, value):
    names = {f.name: f for f in fields(SynthConfig)}
    if name not in names or name in ("params", "seed"):
        raise ConfigError(f"unknown synth key {name!r}")
    if name in ("target_correlations", "population_range"):
        return tuple(float(x) for x in value.split(","))
    default = getattr(SynthConfig(), name)
    return int(value) if isinstance(default, int) else float(value)


def result_hash(result: SimulationResult) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(result.daily_deaths, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(result.per_community_cumulative_deaths, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def _fmt(x) -> str:
    return repr(float(x))


class _Writer:
    """Small helper for long-format CSV tables."""

    def __init__(self, path: Path, header):
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(header)

    def row(self, *values):
        self.w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in values])

    def close(self):
        self.fh.close()


def _load_or_generate(config: ExperimentConfig, seed: int) -> World:
    if config.world:
        world = load_world(config.world)
        if config.params:
            world = world.with_params(world.params.with_values(**config.params))
        return world
    return generate_world(config.synth_config(seed))


def _resolve_weights(config, world, seed, table, scenario, kind):
    path = config.weights if kind is StrategyKind.COMPREHENSIVE else config.ablation_weights
    if path:
        return read_weights(path)
    search = learn_weights(world, config.learn_budget, scenario, n_candidates=config.n_candidates,
                           seed=seed, ablation=kind is StrategyKind.COMPREHENSIVE_ABLATION,
                           table=table, threads=config.threads, day=config.timings[0])
    return search.weights


def run_experiment(config: ExperimentConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    model = ModelKind.parse(config.model)
    kinds = [StrategyKind.parse(s) for s in config.strategies]
    manifest = {"config": _config_dict(config), "status": "running", "seeds": {}}

    sweep = _Writer(out / "sweep_results.csv",
                    ["seed", "scenario", "strategy", "budget", "timing", "reference", "metric", "value"])
    curves = _Writer(out / "daily_deaths_by_model.csv", ["seed", "series", "day", "deaths"])
    groups = _Writer(out / "group_rates_by_model.csv", ["seed", "model", "dimension", "group", "rate"])
    weights_out = _Writer(out / "learned_weights.csv", ["seed", "scenario", "strategy", "feature", "weight"])
    regress = None
    if config.regression_instances > 0:
        regress = _Writer(out / "index_regression.csv",
                          ["seed", "target", "model", "features", "adjusted_r2"])
    writers = [sweep, curves, groups, weights_out] + ([regress] if regress else [])
    try:
        for seed in config.seeds:
            world = _load_or_generate(config, seed)
            info = manifest["seeds"][str(seed)] = {"baseline_hashes": {}, "cells": 0}
            base_by_model = {m: run(world, m, None, DETERMINISTIC) for m in ModelKind}
            for m, res in base_by_model.items():
                for d, v in enumerate(res.daily_deaths):
                    curves.row(seed, m.value, d, float(v))
                for dim in DIMENSIONS:
                    rates, _ = group_rates(res.per_community_cumulative_deaths, world, dim)
                    for g, r in enumerate(rates):
                        groups.row(seed, m.value, dim, g, float(r))
            if world.observed_daily_deaths is not None:
                for d, v in enumerate(world.observed_daily_deaths):
                    curves.row(seed, "observed", d, float(v))

            baseline = base_by_model[model]
            for t in config.timings:
                # one shared unvaccinated run per (world, timing)
                info["baseline_hashes"][str(t)] = result_hash(baseline)

            table = None
            if any(k in COMPREHENSIVE for k in kinds) or regress:
                table = build_index_table(world, baseline=base_by_model[ModelKind.BD])

            if regress:
                study = index_ablation_study(world, config.regression_instances,
                                             config.regression_coverage, seed,
                                             config.threads, table)
                for tname in TARGETS:
                    for label, res in (("demographics", study.baseline[tname]),
                                       ("demographics+index", study.with_index[tname])):
                        regress.row(seed, tname, label, ";".join(res.feature_names),
                                    float(res.adjusted_r2))

            for scen_name in config.scenarios:
                scenario = AcceptanceScenario.parse(scen_name)
                weights = {}
                for k in kinds:
                    if k in COMPREHENSIVE:
                        weights[k] = _resolve_weights(config, world, seed, table, scenario, k)
                        for fname, wv in zip(("community_risk", "societal_harm",
                                              "older_adult_fraction", "neg_income_percentile",
                                              "essential_worker_fraction"), weights[k]):
                            weights_out.row(seed, scenario.name, k.value, fname, float(wv))
                cells = [(b, t) for b in config.budgets for t in config.timings]

                def homogeneous_run(cell):
                    b, t = cell
                    plan = make_plan(world, StrategyKind.HOMOGENEOUS, b, scenario, t, seed)
                    return run(world, model, plan, DETERMINISTIC)

                homog = dict(zip(cells, pmap(homogeneous_run, cells, config.threads)))
                jobs = [(k, b, t) for k in kinds for (b, t) in cells]

                def one(job):
                    k, b, t = job
                    try:
                        plan = make_plan(world, k, b, scenario, t, seed, weights=weights.get(k),
                                         index_table=table)
                        res = run(world, model, plan, DETERMINISTIC)
                        return (_report(res, baseline, world), _report(res, homog[(b, t)], world))
                    except BDVaxError as exc:
                        raise RuntimeError(
                            f"cell strategy={k.value} budget={b} timing={t} seed={seed}: {exc}") from exc

                for (k, b, t), reports in zip(jobs, pmap(one, jobs, config.threads)):
                    for ref, rep in zip(REFERENCES, reports):
                        for metric in METRICS:
                            sweep.row(seed, scenario.name, k.value, float(b), int(t), ref, metric,
                                      float(rep[metric]))
                    info["cells"] += 1
        manifest["status"] = "complete"
    except Exception as exc:
        manifest["status"] = "failed"
        manifest["error"] = str(exc)
        raise
    finally:
        for w in writers:
            w.close()
        with open(out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _derive_figure_tables(out)
    return out


def _report(res, reference, world) -> dict:
    """Four changes and their sum; changes with a zero reference are reported as 0."""
    if res.total_deaths == reference.total_deaths and np.array_equal(
            res.per_community_cumulative_deaths, reference.per_community_cumulative_deaths):
        return dict.fromkeys(METRICS, 0.0)
    return evaluate(res, reference, world).as_dict()


def _config_dict(config: ExperimentConfig) -> dict:
    d = {f.name: getattr(config, f.name) for f in fields(config)}
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def read_sweep(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def sweep_table(rows, reference: str = "homogeneous", metric: str = "overall_performance"):
    """{(seed, scenario, strategy, budget, timing): value} for one reference and metric."""
    out = {}
    for r in rows:
        if r["reference"] == reference and r["metric"] == metric:
            key = (int(r["seed"]), r["scenario"], r["strategy"], float(r["budget"]), int(r["timing"]))
            out[key] = float(r["value"])
    return out


def _derive_figure_tables(out: Path) -> None:
    """Projections of the sweep used by the plotting layer."""
    rows = read_sweep(out / "sweep_results.csv")
    vs_h = [r for r in rows if r["reference"] == "homogeneous"]

    w = _Writer(out / "utility_vs_own_equity.csv",
                ["seed", "scenario", "strategy", "budget", "timing", "utility_change",
                 "own_dimension", "own_equity_change"])
    idx = {(r["seed"], r["scenario"], r["strategy"], r["budget"], r["timing"], r["metric"]): r["value"]
           for r in vs_h}
    for key in sorted({k[:5] for k in idx}):
        kind = StrategyKind.parse(key[2])
        if kind not in DIMENSION_OF:
            continue
        dim = DIMENSION_OF[kind]
        w.row(*key, idx[key + ("utility_change",)], dim, idx[key + (f"equity_change_{dim}",)])
    w.close()

    w = _Writer(out / "equity_by_dimension.csv",
                ["seed", "scenario", "strategy", "budget", "timing", "dimension", "equity_change"])
    for r in vs_h:
        if r["metric"].startswith("equity_change_"):
            w.row(r["seed"], r["scenario"], r["strategy"], r["budget"], r["timing"],
                  r["metric"][len("equity_change_"):], r["value"])
    w.close()

    w = _Writer(out / "utility_by_scenario.csv",
                ["seed", "scenario", "strategy", "budget", "timing", "utility_change"])
    for r in vs_h:
        if r["metric"] == "utility_change":
            w.row(r["seed"], r["scenario"], r["strategy"], r["budget"], r["timing"], r["value"])
    w.close()

    w = _Writer(out / "metric_profile.csv",
                ["seed", "scenario", "strategy", "budget", "timing", "metric", "value"])
    for r in vs_h:
        if r["metric"] != "overall_performance":
            w.row(r["seed"], r["scenario"], r["strategy"], r["budget"], r["timing"], r["metric"],
                  r["value"])
    w.close()

    w = _Writer(out / "overall_performance_sweep.csv",
                ["seed", "scenario", "strategy", "budget", "timing", "overall_performance"])
    for r in vs_h:
        if r["metric"] == "overall_performance":
            w.row(r["seed"], r["scenario"], r["strategy"], r["budget"], r["timing"], r["value"])
    w.close()


def performance_spread(rows, reference: str = "homogeneous", timing: int = DEFAULT_DAY,
                       scenario: str = "none", seed: int | None = None) -> dict:
    """{budget: max - min overall performance across strategies}."""
    table = sweep_table(rows, reference)
    by_budget: dict = {}
    for (s, sc, _strategy, b, t), v in table.items():
        if t == timing and sc == scenario and (seed is None or s == seed):
            by_budget.setdefault(b, []).append(v)
    return {b: max(v) - min(v) for b, v in sorted(by_budget.items())}


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})

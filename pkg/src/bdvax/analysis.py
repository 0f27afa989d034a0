"""Random vaccination instances, OLS with adjusted R^2, and weight learning."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datamodel import OutcomeReport, VaccinePlan, World
from .engine import DETERMINISTIC, DIMENSIONS, ModelKind, SimulationResult, run
from .errors import ConfigError, DimensionError, ValidationError
from .indices import IndexTable, build_index_table
from .metrics import evaluate
from .strategies import (DEFAULT_DAY, N_FEATURES, AcceptanceScenario, StrategyKind, make_plan,
                         standardize)

TARGETS = ("utility_change",) + tuple(f"equity_change_{d}" for d in DIMENSIONS)
DEMOGRAPHIC_FEATURES = ("older_adult_fraction", "income", "essential_worker_fraction")
# index added to each target's regression
TARGET_INDEX = {
    "utility_change": "societal_harm",
    "equity_change_age": "community_risk",
    "equity_change_income": "community_risk",
    "equity_change_occupation": "community_risk",
}


def pmap(fn, items, threads: int = 1) -> list:
    """Order-preserving map; threads only help where the work releases the GIL."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Instances


@dataclass(frozen=True)
class Instance:
    communities: np.ndarray
    coverage: float
    features: dict


def instance_features(table: IndexTable, members) -> dict:
    """Population-weighted means over the member set (societal harm per capita)."""
    w = table.population[members]
    cols = {
        "older_adult_fraction": table.older_adult_fraction,
        "income": table.income,
        "essential_worker_fraction": table.essential_worker_fraction,
        "community_risk": table.community_risk,
        "societal_harm": table.societal_harm / table.population,
    }
    return {k: float(np.dot(w, v[members]) / w.sum()) for k, v in cols.items()}


def generate_instances(world: World, n_instances: int, coverage: float, seed: int = 0,
                       table: IndexTable | None = None) -> list[Instance]:
    """Random community sets: draw without replacement until coverage is first reached."""
    if not 0 < coverage <= 1:
        raise ConfigError(f"coverage {coverage} outside (0, 1]")
    if n_instances < 1:
        raise ConfigError("need at least one instance")
    pop = np.asarray(world.population, dtype=np.float64)
    total = pop.sum()
    target = coverage * total
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(int(n_instances)):
        order = rng.permutation(pop.size)
        cum = np.cumsum(pop[order])
        k = int(np.searchsorted(cum, target * (1 - 1e-12), side="left")) + 1
        if k > pop.size:
            raise ConfigError("coverage unreachable")
        members = np.sort(order[:k])
        feats = instance_features(table, members) if table is not None else {}
        out.append(Instance(members, float(cum[k - 1] / total), feats))
    return out


def instance_plan(world: World, inst: Instance) -> VaccinePlan:
    frac = np.zeros(world.n_communities)
    frac[inst.communities] = 1.0
    return VaccinePlan(frac, np.zeros(world.n_communities, dtype=np.int64), inst.coverage)


# ---------------------------------------------------------------------------
# OLS


@dataclass(frozen=True)
class RegressionResult:
    coefficients: np.ndarray
    intercept: float
    r2: float
    adjusted_r2: float
    n_instances: int
    feature_names: tuple = ()
    target: str = ""
    residuals: np.ndarray = field(default=None, repr=False)


def adjusted_r2(r2: float, n: int, k: int) -> float:
    return 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1)


def ols_fit(features, targets, feature_names=None, target: str = "") -> RegressionResult:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(targets, dtype=np.float64).ravel()
    n, k = X.shape
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(k))
    if y.size != n:
        raise DimensionError(f"ols: {n} rows of features but {y.size} targets")
    if n <= k + 1:
        raise ValidationError(f"ols: need more than {k + 1} rows, got {n}")
    A = np.column_stack([np.ones(n), X])
    _check_rank(A, ("intercept",) + names)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RegressionResult(coef[1:], float(coef[0]), r2, adjusted_r2(r2, n, k), n, names,
                            target, resid)


def _check_rank(A, names) -> None:
    """Name the first column that adds no rank to the columns before it."""
    scale = np.linalg.norm(A, axis=0)
    B = A / np.where(scale > 0, scale, 1.0)
    for j in range(A.shape[1]):
        if np.linalg.matrix_rank(B[:, : j + 1]) <= j:
            others = ", ".join(repr(x) for x in names[:j])
            raise ValidationError(
                f"ols: rank-deficient design; column {names[j]!r} is collinear with {others or 'nothing'}")


# ---------------------------------------------------------------------------
# Index ablation study


@dataclass
class AblationStudy:
    baseline: dict           # target -> demographics-only RegressionResult
    with_index: dict         # target -> demographics + index RegressionResult
    outcomes: np.ndarray     # n_instances x 4 targets
    features: np.ndarray     # n_instances x 5 (demographics, CR, SH)

    def gains(self) -> dict:
        return {t: self.with_index[t].adjusted_r2 - self.baseline[t].adjusted_r2 for t in TARGETS}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["target", "model", "features", "adjusted_r2", "r2", "n_instances"])
            for t in TARGETS:
                for label, res in (("demographics", self.baseline[t]),
                                   ("demographics+index", self.with_index[t])):
                    w.writerow([t, label, ";".join(res.feature_names), repr(res.adjusted_r2),
                                repr(res.r2), res.n_instances])


FEATURE_ORDER = DEMOGRAPHIC_FEATURES + ("community_risk", "societal_harm")


def simulate_instances(world: World, instances, reference: SimulationResult,
                       threads: int = 1) -> np.ndarray:
    def one(inst):
        res = run(world, ModelKind.BD, instance_plan(world, inst), DETERMINISTIC)
        r = evaluate(res, reference, world)
        return [r.utility_change, r.equity_change_age, r.equity_change_income,
                r.equity_change_occupation]
    return np.array(pmap(one, instances, threads))


def index_ablation_study(world: World, n_instances: int = 1000, coverage: float = 0.02,
                         seed: int = 0, threads: int = 1,
                         table: IndexTable | None = None) -> AblationStudy:
    reference = run(world, ModelKind.BD, None, DETERMINISTIC)
    table = build_index_table(world, baseline=reference) if table is None else table
    instances = generate_instances(world, n_instances, coverage, seed, table)
    Y = simulate_instances(world, instances, reference, threads)
    F = np.array([[inst.features[k] for k in FEATURE_ORDER] for inst in instances])
    Z = standardize(F)
    col = {k: j for j, k in enumerate(FEATURE_ORDER)}
    demo = [col[k] for k in DEMOGRAPHIC_FEATURES]
    base, extra = {}, {}
    for t_idx, t in enumerate(TARGETS):
        base[t] = ols_fit(Z[:, demo], Y[:, t_idx], DEMOGRAPHIC_FEATURES, t)
        idx = demo + [col[TARGET_INDEX[t]]]
        extra[t] = ols_fit(Z[:, idx], Y[:, t_idx], DEMOGRAPHIC_FEATURES + (TARGET_INDEX[t],), t)
    return AblationStudy(base, extra, Y, F)


# ---------------------------------------------------------------------------
# Weight learning


def l1_sphere_samples(n: int, dims, seed: int) -> np.ndarray:
    """``n`` signed vectors uniform on the unit L1 sphere of the ``dims`` coordinates."""
    rng = np.random.default_rng(seed)
    dims = list(dims)
    out = np.zeros((n, N_FEATURES))
    mag = rng.exponential(size=(n, len(dims)))
    mag /= mag.sum(axis=1, keepdims=True)
    sign = rng.choice([-1.0, 1.0], size=(n, len(dims)))
    out[:, dims] = mag * sign
    return out


def candidate_weights(n_candidates: int = 500, seed: int = 0, ablation: bool = False) -> np.ndarray:
    dims = range(2, N_FEATURES) if ablation else range(N_FEATURES)
    axes = np.zeros((len(dims), N_FEATURES))
    for i, d in enumerate(dims):
        axes[i, d] = 1.0
    return np.vstack([l1_sphere_samples(n_candidates, dims, seed), axes])


@dataclass
class WeightSearch:
    weights: np.ndarray
    performance: float
    candidates: np.ndarray
    scores: np.ndarray
    reports: list


def learn_weights(world: World, budget: float = 0.1, scenario: AcceptanceScenario | None = None,
                  candidates=None, n_candidates: int = 500, seed: int = 0, ablation: bool = False,
                  reference: SimulationResult | None = None, table: IndexTable | None = None,
                  threads: int = 1, day: int = DEFAULT_DAY) -> WeightSearch:
    """Argmax of overall performance over candidate weight vectors.

    ``reference`` defaults to the Homogeneous plan at the same budget. Ties go to
    the lexicographically smallest weight vector, so candidate order is irrelevant.
    """
    kind = StrategyKind.COMPREHENSIVE_ABLATION if ablation else StrategyKind.COMPREHENSIVE
    if candidates is None:
        candidates = candidate_weights(n_candidates, seed, ablation)
    cands = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if cands.shape[1] != N_FEATURES:
        raise DimensionError(f"weight candidates need {N_FEATURES} columns")
    if table is None:
        table = build_index_table(world)
    if reference is None:
        ref_plan = make_plan(world, StrategyKind.HOMOGENEOUS, budget, scenario, day)
        reference = run(world, ModelKind.BD, ref_plan, DETERMINISTIC)

    def score(w) -> OutcomeReport:
        plan = make_plan(world, kind, budget, scenario, day, weights=w, index_table=table)
        return evaluate(run(world, ModelKind.BD, plan, DETERMINISTIC), reference, world)

    reports = pmap(score, list(cands), threads)
    perf = np.array([r.overall_performance for r in reports])
    best_val = perf.max()
    tied = np.flatnonzero(perf == best_val)
    best = min(tied, key=lambda i: tuple(cands[i]))
    return WeightSearch(cands[best].copy(), float(best_val), cands, perf, reports)


def write_weights(weights, path) -> None:
    from .strategies import COMPREHENSIVE_FEATURES
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "weight"])
        for name, x in zip(COMPREHENSIVE_FEATURES, np.asarray(weights).ravel()):
            w.writerow([name, repr(float(x))])


def read_weights(path) -> np.ndarray:
    from .datamodel import iter_csv
    from .errors import ParseError
    from .strategies import COMPREHENSIVE_FEATURES
    vals = {}
    for line, header, row in iter_csv(path, ("feature", "weight")):
        rec = dict(zip(header, row))
        name = rec["feature"].strip()
        if name not in COMPREHENSIVE_FEATURES:
            raise ParseError(path, line, f"unknown feature {name!r}")
        try:
            vals[name] = float(rec["weight"])
        except ValueError:
            raise ParseError(path, line, "weight is not a number") from None
    missing = [f for f in COMPREHENSIVE_FEATURES if f not in vals]
    if missing:
        raise ConfigError(f"{path}: missing weights for {missing}")
    return np.array([vals[f] for f in COMPREHENSIVE_FEATURES])

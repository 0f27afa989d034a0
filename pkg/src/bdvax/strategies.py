"""Vaccine allocation strategies producing :class:`VaccinePlan` objects.

Every strategy spends a budget measured in persons (``budget_fraction`` of the
total population) subject to per-community acceptance caps, which depend on the
community's income quintile.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import stats

from .datamodel import VaccinePlan, World, iter_csv
from .engine import DETERMINISTIC, STOCHASTIC, id_rank, population_quantile_groups
from .errors import ConfigError, DimensionError, ParseError

N_QUINTILES = 5

# acceptance from the bottom to the top income quintile
SCENARIOS = {
    "none": (1.0, 1.0, 1.0, 1.0, 1.0),
    # stand-ins; edit to match the survey being modelled
    "real1": (0.55, 0.65, 0.72, 0.79, 0.85),
    "real2": (0.45, 0.55, 0.65, 0.75, 0.85),
    "hypo1": (0.6, 0.7, 0.8, 0.9, 1.0),
    "hypo2": (0.2, 0.4, 0.6, 0.8, 1.0),
    "hypo3": (0.1, 0.3, 0.5, 0.7, 1.0),
}

# vaccines arrive once the epidemic is already under way
DEFAULT_DAY = 20

# relative per-capita coverage by income quintile (bottom to top); stand-in
DEFAULT_COVERAGE_TABLE = (0.8, 0.9, 1.0, 1.1, 1.2)

COMPREHENSIVE_FEATURES = ("community_risk", "societal_harm", "older_adult_fraction",
                          "neg_income_percentile", "essential_worker_fraction")
N_FEATURES = len(COMPREHENSIVE_FEATURES)


@dataclass(frozen=True)
class AcceptanceScenario:
    name: str
    acceptance_by_income_quintile: tuple

    def __post_init__(self):
        acc = tuple(float(a) for a in self.acceptance_by_income_quintile)
        if len(acc) != N_QUINTILES:
            raise ConfigError(f"scenario {self.name}: need {N_QUINTILES} acceptance rates, got {len(acc)}")
        if any(not 0 < a <= 1 for a in acc):
            raise ConfigError(f"scenario {self.name}: acceptance rates must lie in (0, 1]")
        object.__setattr__(self, "acceptance_by_income_quintile", acc)

    @classmethod
    def preset(cls, name: str) -> "AcceptanceScenario":
        key = name.lower().replace("-", "").replace("_", "")
        if key not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}")
        return cls(key, SCENARIOS[key])

    @classmethod
    def parse(cls, text: str) -> "AcceptanceScenario":
        """``none``/``real1``/.../``hypo3`` or ``custom:<csv>`` with columns quintile,acceptance."""
        if text.lower().startswith("custom:"):
            path = Path(text[len("custom:"):])
            rows = {}
            for line, header, row in iter_csv(path, ("quintile", "acceptance")):
                rec = dict(zip(header, row))
                try:
                    rows[int(rec["quintile"])] = float(rec["acceptance"])
                except ValueError:
                    raise ParseError(path, line, "quintile must be an integer and acceptance a number") from None
            if sorted(rows) != list(range(N_QUINTILES)):
                raise ConfigError(f"{path}: need quintiles 0..{N_QUINTILES - 1} exactly once")
            return cls("custom", tuple(rows[q] for q in range(N_QUINTILES)))
        return cls.preset(text)

    def caps(self, world: World) -> np.ndarray:
        """Per-community acceptance cap from its income quintile."""
        q = income_quintiles(world)
        return np.asarray(self.acceptance_by_income_quintile)[q]


NO_HESITANCY = AcceptanceScenario("none", SCENARIOS["none"])


def income_quintiles(world: World) -> np.ndarray:
    return population_quantile_groups(world.income, world.population, N_QUINTILES, id_rank(world))


class StrategyKind(str, Enum):
    HOMOGENEOUS = "homogeneous"
    AGE = "age"
    INCOME = "income"
    OCCUPATION = "occupation"
    REVERSE_AGE = "reverse-age"
    REVERSE_INCOME = "reverse-income"
    REVERSE_OCCUPATION = "reverse-occupation"
    SVI = "svi"
    REAL_WORLD = "real-world"
    COMPREHENSIVE = "comprehensive"
    COMPREHENSIVE_ABLATION = "comprehensive-ablation"

    @classmethod
    def parse(cls, value) -> "StrategyKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "-")
        key = {"prioritize-by-age": "age", "prioritize-by-income": "income",
               "prioritize-by-occupation": "occupation", "realworld": "real-world"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown strategy {value!r}; expected one of {names}") from None


PRIORITY_STRATEGIES = (StrategyKind.AGE, StrategyKind.INCOME, StrategyKind.OCCUPATION)
REVERSE_OF = {
    StrategyKind.AGE: StrategyKind.REVERSE_AGE,
    StrategyKind.INCOME: StrategyKind.REVERSE_INCOME,
    StrategyKind.OCCUPATION: StrategyKind.REVERSE_OCCUPATION,
}
DIMENSION_OF = {
    StrategyKind.AGE: "age", StrategyKind.INCOME: "income", StrategyKind.OCCUPATION: "occupation",
    StrategyKind.REVERSE_AGE: "age", StrategyKind.REVERSE_INCOME: "income",
    StrategyKind.REVERSE_OCCUPATION: "occupation",
}


# ---------------------------------------------------------------------------
# Scores


def percentile_rank(x) -> np.ndarray:
    """Average-tie percentile rank scaled to [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return np.zeros_like(x)
    return (stats.rankdata(x, method="average") - 1.0) / (x.size - 1.0)


def svi_score(world: World) -> np.ndarray:
    """Composite vulnerability: percentile rank of the mean feature percentile rank."""
    if world.n_communities < 2:
        raise ConfigError("SVI needs at least two communities")
    parts = (percentile_rank(world.older_adult_fraction), percentile_rank(-np.asarray(world.income)),
             percentile_rank(world.essential_fraction))
    return percentile_rank(np.mean(parts, axis=0))


def comprehensive_features(table) -> np.ndarray:
    """n x 5 matrix in :data:`COMPREHENSIVE_FEATURES` order, before standardization."""
    return np.column_stack([
        table.community_risk,
        table.societal_harm / table.population,
        table.older_adult_fraction,
        percentile_rank(-np.asarray(table.income)),
        table.essential_worker_fraction,
    ])


def standardize(X) -> np.ndarray:
    """Zero mean, unit variance columns; constant columns become 0."""
    X = np.asarray(X, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    out = np.zeros_like(X)
    ok = sd > 1e-12 * np.maximum(1.0, np.abs(mu))
    out[:, ok] = (X[:, ok] - mu[ok]) / sd[ok]
    return out


def comprehensive_score(table, weights, ablation: bool = False) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size != N_FEATURES:
        raise DimensionError(f"comprehensive weights need {N_FEATURES} entries, got {w.size}")
    if not np.all(np.isfinite(w)):
        raise ConfigError("comprehensive weights must be finite")
    if ablation:
        w = w.copy()
        w[:2] = 0.0
    return standardize(comprehensive_features(table)) @ w


def priority_score(world: World, kind: StrategyKind, table=None, weights=None) -> np.ndarray:
    """Higher score = served earlier."""
    if kind in (StrategyKind.AGE, StrategyKind.REVERSE_AGE):
        s = world.older_adult_fraction
    elif kind in (StrategyKind.INCOME, StrategyKind.REVERSE_INCOME):
        s = -np.asarray(world.income, dtype=np.float64)
    elif kind in (StrategyKind.OCCUPATION, StrategyKind.REVERSE_OCCUPATION):
        s = np.asarray(world.essential_fraction, dtype=np.float64)
    elif kind is StrategyKind.SVI:
        s = svi_score(world)
    elif kind in (StrategyKind.COMPREHENSIVE, StrategyKind.COMPREHENSIVE_ABLATION):
        if weights is None:
            raise ConfigError(f"strategy {kind.value} needs a weight vector")
        if table is None:
            from .indices import build_index_table
            table = build_index_table(world)
        s = comprehensive_score(table, weights, kind is StrategyKind.COMPREHENSIVE_ABLATION)
    else:
        raise ConfigError(f"strategy {kind.value} is not rank based")
    s = np.asarray(s, dtype=np.float64)
    return -s if kind.value.startswith("reverse-") else s


# ---------------------------------------------------------------------------
# Filling rules


def rank_fill(order, caps, population, persons: float) -> np.ndarray:
    """Fill communities in ``order`` up to their caps; the marginal one fractionally."""
    frac = np.zeros(population.size)
    left = persons
    for c in order:
        if left <= 0:
            break
        room = caps[c] * population[c]
        take = min(room, left)
        frac[c] = take / population[c]
        left -= take
    return np.minimum(frac, caps)


def water_fill(shares, caps, population, persons: float) -> np.ndarray:
    """Fractions min(s * shares, caps) with scale s chosen to spend ``persons``."""
    shares = np.asarray(shares, dtype=np.float64)
    active = shares > 0
    full = float(np.dot(caps[active], population[active]))
    if persons >= full:
        return np.where(active, caps, 0.0)
    # breakpoints where a community saturates
    s_sat = np.where(active, caps / np.where(active, shares, 1.0), np.inf)
    order = np.argsort(s_sat, kind="stable")
    spent_sat = 0.0
    slope = float(np.dot(shares, population))
    s = 0.0
    for c in order:
        if not active[c]:
            break
        s_try = (persons - spent_sat) / slope
        if s_try <= s_sat[c]:
            s = s_try
            break
        spent_sat += caps[c] * population[c]
        slope -= shares[c] * population[c]
        s = s_sat[c]
    return np.minimum(s * shares, caps)


def _exact_budget(frac, caps, population, persons):
    """Trim floating error so coverage never exceeds the budget."""
    spent = float(np.dot(frac, population))
    if spent > persons and spent > 0:
        frac = frac * (persons / spent)
    return np.clip(frac, 0.0, caps)


# ---------------------------------------------------------------------------


def make_plan(world: World, kind, budget_fraction: float,
              scenario: AcceptanceScenario | None = None, day: int = DEFAULT_DAY, seed: int = 0,
              mode: str = DETERMINISTIC, weights=None, index_table=None,
              coverage_table=None) -> VaccinePlan:
    kind = StrategyKind.parse(kind)
    if not 0.0 <= budget_fraction <= 1.0:
        raise ConfigError(f"budget fraction {budget_fraction} outside [0, 1]")
    if int(day) < 0:
        raise ConfigError("administration day must be >= 0")
    scenario = NO_HESITANCY if scenario is None else scenario
    pop = np.asarray(world.population, dtype=np.float64)
    n = pop.size
    caps = scenario.caps(world) if n >= N_QUINTILES else np.ones(n)
    persons = budget_fraction * float(pop.sum())

    if kind is StrategyKind.HOMOGENEOUS:
        if mode == STOCHASTIC:
            order = np.random.default_rng(seed).permutation(n)
            frac = rank_fill(order, caps, pop, persons)
        else:
            frac = water_fill(np.ones(n), caps, pop, persons)
    elif kind is StrategyKind.REAL_WORLD:
        table = DEFAULT_COVERAGE_TABLE if coverage_table is None else coverage_table
        table = np.asarray(table, dtype=np.float64).ravel()
        if table.size != N_QUINTILES or np.any(table < 0) or not np.all(np.isfinite(table)) \
                or table.sum() <= 0:
            raise ConfigError(
                f"coverage table needs {N_QUINTILES} finite nonnegative entries, not all zero")
        frac = water_fill(table[income_quintiles(world)], caps, pop, persons)
    else:
        score = priority_score(world, kind, index_table, weights)
        order = np.lexsort((id_rank(world), -score))
        frac = rank_fill(order, caps, pop, persons)

    frac = _exact_budget(frac, caps, pop, persons)
    shortfall = max(0.0, budget_fraction - float(np.dot(frac, pop)) / float(pop.sum()))
    plan = VaccinePlan(frac, np.full(n, int(day), dtype=np.int64), float(budget_fraction),
                       shortfall if shortfall > 1e-9 else 0.0)
    plan.check(pop, caps)
    return plan

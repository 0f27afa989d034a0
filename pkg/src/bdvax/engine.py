"""Community SEIR dynamics coupled through hourly POI co-presence.

Three model variants share one kernel:

* ``BD``: per-community infection fatality ratio from the age profile.
* ``METAPOP``: same mobility coupling, population-averaged IFR everywhere.
* ``SEIR``: one well-mixed population (mobility ignored), averaged IFR.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .datamodel import CompartmentState, Community, EpidemicParams, VaccinePlan, World
from .errors import ConfigError, DimensionError

DETERMINISTIC = "deterministic"
STOCHASTIC = "stochastic"
MODES = (DETERMINISTIC, STOCHASTIC)

DIMENSIONS = ("age", "income", "occupation")


class ModelKind(str, Enum):
    BD = "bd"
    METAPOP = "metapop"
    SEIR = "seir"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown model {value!r}; expected one of bd, metapop, seir") from None


@dataclass
class SimulationResult:
    daily_deaths: np.ndarray
    per_community_cumulative_deaths: np.ndarray
    per_community_cumulative_infections: np.ndarray
    final_state: CompartmentState
    daily_infections: np.ndarray
    mean_prevalence: np.ndarray
    mean_susceptible_fraction: np.ndarray
    diagnostics: int = 0

    @property
    def total_deaths(self) -> float:
        return float(self.per_community_cumulative_deaths.sum())


def community_ifr(community: Community, params: EpidemicParams) -> float:
    """Age-mix weighted IFR of one community."""
    fr = np.asarray(community.age_fractions, dtype=np.float64)
    if fr.shape != (params.n_bands,):
        raise DimensionError(
            f"community {community.id}: {fr.size} age bands, params define {params.n_bands}")
    return float(np.dot(fr, params.ifr_by_age))


def community_ifrs(world: World) -> np.ndarray:
    if world.age_fractions.shape[1] != world.params.n_bands:
        raise DimensionError("age fraction columns do not match the IFR band count")
    return world.age_fractions @ np.asarray(world.params.ifr_by_age)


def model_ifr(world: World, model: ModelKind) -> np.ndarray:
    ifr = community_ifrs(world)
    if ModelKind.parse(model) is ModelKind.BD:
        return ifr
    mean = float(np.dot(ifr, world.population) / world.total_population)
    return np.full(world.n_communities, mean)


def delay_hours(params: EpidemicParams) -> int:
    return int(round(params.death_delay * 24))


def initial_state(world: World, mode: str = DETERMINISTIC, seed: int = 0) -> CompartmentState:
    """Seed ``initial_infected_fraction`` of every community into the exposed class."""
    n = world.n_communities
    state = CompartmentState.zeros(n, delay_hours(world.params))
    pop = world.population
    frac = world.params.initial_infected_fraction
    if mode == STOCHASTIC:
        _require_integral(world)
        rng = np.random.default_rng([seed, 0x5EED])
        seeds = rng.binomial(pop.astype(np.int64), frac).astype(np.float64)
    else:
        seeds = pop * frac
    state.exposed[:] = seeds
    state.susceptible[:] = pop - seeds
    return state


def _require_integral(world: World) -> None:
    if np.any(world.population != np.round(world.population)):
        raise ConfigError("stochastic mode requires integer community populations")


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected deterministic or stochastic")
    return mode


def _rates(params: EpidemicParams):
    return 1.0 / (24.0 * params.latency_period), 1.0 / (24.0 * params.infectious_period)


def _advance(world, model, state, start_hour, n_hours, vac_hour, vac_frac, mode, seed, n_days):
    params = world.params
    mob = world.mobility
    sigma_h, gamma_h = _rates(params)
    n = world.n_communities
    daily_deaths = np.zeros(n_days)
    daily_inf = np.zeros(n_days)
    cum_inf = np.zeros(n)
    prev_sum = np.zeros(n)
    sus_sum = np.zeros(n)
    homogeneous = model is ModelKind.SEIR
    clamped = _kernels.simulate(
        mob.hour_ptr, mob.community, mob.poi, mob.weight,
        np.ascontiguousarray(world.population, dtype=np.float64),
        np.ascontiguousarray(world.poi_factor, dtype=np.float64),
        float(params.beta_poi), float(params.beta_base), sigma_h, gamma_h,
        np.ascontiguousarray(model_ifr(world, model)), delay_hours(params),
        state.susceptible, state.exposed, state.infectious, state.recovered,
        state.vaccinated, state.deaths, state.pending,
        int(start_hour), int(n_hours), vac_hour, vac_frac, homogeneous,
        mode == STOCHASTIC, int(seed) % (2**32),
        daily_deaths, daily_inf, cum_inf, prev_sum, sus_sum,
    )
    return daily_deaths, daily_inf, cum_inf, prev_sum, sus_sum, int(clamped)


def step_hour(world: World, state: CompartmentState, hour: int, plan_mask=None,
              mode: str = DETERMINISTIC, seed: int = 0, model=ModelKind.BD,
              diagnostics: dict | None = None) -> CompartmentState:
    """Return the state one hour later; ``state`` itself is left untouched.

    ``plan_mask`` gives per-community fractions of the remaining susceptibles
    made immune at the start of this hour.
    """
    model = ModelKind.parse(model)
    _check_mode(mode)
    if not 0 <= hour < world.hours and model is not ModelKind.SEIR:
        raise ConfigError(f"hour {hour} outside mobility data ({world.hours} hours)")
    n = world.n_communities
    new = state.copy()
    if new.pending.shape[1] != max(delay_hours(world.params), 1):
        raise DimensionError("state death pipeline does not match params.death_delay")
    if plan_mask is None:
        vac_hour = np.full(n, -1, dtype=np.int64)
        vac_frac = np.zeros(n)
    else:
        mask = np.asarray(plan_mask, dtype=np.float64) * world.params.vaccine_efficacy
        vac_hour = np.where(mask > 0, hour, -1).astype(np.int64)
        vac_frac = np.ascontiguousarray(mask)
    *_, clamped = _advance(world, model, new, hour, 1, vac_hour, vac_frac, mode, seed, 1)
    if diagnostics is not None:
        diagnostics["clamped"] = diagnostics.get("clamped", 0) + clamped
    return new


def run(world: World, model=ModelKind.BD, plan: VaccinePlan | None = None,
        mode: str = DETERMINISTIC, horizon_days: int | None = None, seed: int = 0) -> SimulationResult:
    """Simulate ``horizon_days`` days from the seeded initial state."""
    model = ModelKind.parse(model)
    _check_mode(mode)
    days = world.days if horizon_days is None else int(horizon_days)
    if days < 1:
        raise ConfigError("horizon must be at least one day")
    if model is not ModelKind.SEIR and days * 24 > world.hours:
        raise ConfigError(
            f"horizon of {days} days exceeds the {world.days} days of mobility data")
    n = world.n_communities
    state = initial_state(world, mode, seed)
    seeds = state.exposed.copy()
    vac_hour = np.full(n, -1, dtype=np.int64)
    vac_frac = np.zeros(n)
    if plan is not None:
        if plan.fraction.shape != (n,):
            raise DimensionError("plan length does not match community count")
        active = plan.fraction > 0
        vac_hour[active] = plan.day[active] * 24
        vac_frac = np.ascontiguousarray(plan.fraction * world.params.vaccine_efficacy)
    dd, di, cum_inf, prev_sum, sus_sum, clamped = _advance(
        world, model, state, 0, days * 24, vac_hour, vac_frac, mode, seed, days)
    hours = days * 24
    return SimulationResult(
        daily_deaths=dd,
        per_community_cumulative_deaths=state.deaths.copy(),
        per_community_cumulative_infections=cum_inf + seeds,
        final_state=state,
        daily_infections=di,
        mean_prevalence=prev_sum / hours,
        mean_susceptible_fraction=sus_sum / hours,
        diagnostics=clamped,
    )


# ---------------------------------------------------------------------------
# Grouping by demographic dimension


def dimension_feature(world: World, dimension: str) -> np.ndarray:
    if dimension == "age":
        return world.older_adult_fraction
    if dimension == "income":
        return np.asarray(world.income)
    if dimension == "occupation":
        return np.asarray(world.essential_fraction)
    raise ConfigError(f"unknown dimension {dimension!r}; expected age, income or occupation")


def population_quantile_groups(values, population, n_groups: int, order_key=None) -> np.ndarray:
    """Assign each community to one of ``n_groups`` population-balanced groups.

    Communities are sorted ascending by ``values`` (ties by ``order_key``, then
    position) and a community lands in the group holding the midpoint of its
    population on the cumulative scale. Group 0 holds the lowest values.
    """
    values = np.asarray(values, dtype=np.float64)
    population = np.asarray(population, dtype=np.float64)
    n = values.size
    if n_groups < 2:
        raise ConfigError("need at least two groups")
    if n < n_groups:
        raise ConfigError(f"{n} communities cannot form {n_groups} groups")
    tie = np.arange(n) if order_key is None else np.asarray(order_key)
    order = np.lexsort((tie, values))
    cum = np.cumsum(population[order])
    mid = cum - population[order] / 2.0
    g = np.minimum((mid / cum[-1] * n_groups).astype(np.int64), n_groups - 1)
    groups = np.empty(n, dtype=np.int64)
    groups[order] = g
    if np.unique(groups).size != n_groups:
        raise ConfigError("population too concentrated to form non-empty quantile groups")
    return groups


def id_rank(world: World) -> np.ndarray:
    """Position of each community when ids are sorted; the canonical tie-breaker."""
    order = sorted(range(world.n_communities), key=lambda i: world.community_ids[i])
    rank = np.empty(world.n_communities, dtype=np.int64)
    rank[order] = np.arange(world.n_communities)
    return rank


def group_rates(deaths, world: World, dimension: str, n_groups: int = 5):
    """Per-group deaths / population plus group populations."""
    groups = population_quantile_groups(dimension_feature(world, dimension), world.population,
                                        n_groups, id_rank(world))
    g_deaths = np.bincount(groups, weights=deaths, minlength=n_groups)
    g_pop = np.bincount(groups, weights=world.population, minlength=n_groups)
    return g_deaths / g_pop, g_pop


def mortality_rate_by_group(result: SimulationResult, world: World, dimension: str,
                            n_groups: int = 5) -> np.ndarray:
    rates, _ = group_rates(result.per_community_cumulative_deaths, world, dimension, n_groups)
    return rates

"""Community risk and societal harm indices.

Community risk (CR) is a community's own mortality proxy: its average
per-capita hourly POI contact exposure times its IFR. Societal harm (SH) adds
the deaths a community exports: a one-generation expansion of the POI hazard
between co-visitors, evaluated at the unvaccinated baseline prevalence.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .datamodel import VaccinePlan, World
from .engine import DETERMINISTIC, ModelKind, SimulationResult, community_ifrs, run

ANALYTIC = "analytic"
COUNTERFACTUAL = "counterfactual"


def _horizon_hours(world: World, horizon_days: int | None) -> int:
    days = world.days if horizon_days is None else int(horizon_days)
    return min(days * 24, world.hours)


def contact_exposure(world: World, horizon_days: int | None = None) -> np.ndarray:
    """(1/H) sum_t sum_p w[t][c][p] * dwell_p / area_p / N_c."""
    H = _horizon_hours(world, horizon_days)
    mob = world.mobility
    end = mob.hour_ptr[H]
    f = world.poi_factor[mob.poi[:end]]
    tot = np.bincount(mob.community[:end], weights=mob.weight[:end] * f,
                      minlength=world.n_communities)
    return tot / max(H, 1) / world.population


def community_risk(world: World, horizon_days: int | None = None) -> np.ndarray:
    return contact_exposure(world, horizon_days) * community_ifrs(world)


def contact_matrix(world: World, horizon_days: int | None = None) -> np.ndarray:
    """C[a, b] = sum_t sum_p w[t][a][p] * w[t][b][p] * dwell_p / area_p."""
    H = _horizon_hours(world, horizon_days)
    mob = world.mobility
    return _kernels.contact_matrix(mob.hour_ptr, mob.community, mob.poi, mob.weight,
                                   np.ascontiguousarray(world.poi_factor), world.n_communities, H)


def baseline_run(world: World, horizon_days: int | None = None) -> SimulationResult:
    return run(world, ModelKind.BD, None, DETERMINISTIC, horizon_days)


def societal_harm(world: World, horizon_days: int | None = None,
                  baseline: SimulationResult | None = None,
                  method: str = ANALYTIC) -> np.ndarray:
    """Own expected deaths plus deaths among other communities' co-visitors.

    The own term counts only deaths from infections acquired during the run;
    the initially exposed cohort is already infected, so vaccination cannot
    avert its deaths.

    ``method="counterfactual"`` instead returns, per community, the fall in
    total deaths when only that community is fully vaccinated on day 0.
    """
    if method == COUNTERFACTUAL:
        return counterfactual_harm(world, horizon_days, baseline)
    if method != ANALYTIC:
        raise ValueError(f"unknown societal harm method {method!r}")
    base = baseline_run(world, horizon_days) if baseline is None else baseline
    ifr = community_ifrs(world)
    deaths = base.per_community_cumulative_deaths
    infections = base.per_community_cumulative_infections
    seeded = world.population * world.params.initial_infected_fraction
    share = np.divide(seeded, infections, out=np.ones_like(deaths), where=infections > 0)
    own = deaths * (1.0 - np.clip(share, 0.0, 1.0))
    C = contact_matrix(world, horizon_days)
    np.fill_diagonal(C, 0.0)
    i_bar = base.mean_prevalence
    s_bar = base.mean_susceptible_fraction
    # infections imposed by c on c' = beta_poi * i_bar[c] * C[c, c'] * s_bar[c']
    export = world.params.beta_poi * i_bar * (C @ (s_bar * ifr))
    return own + export


def counterfactual_harm(world: World, horizon_days: int | None = None,
                        baseline: SimulationResult | None = None) -> np.ndarray:
    base = baseline_run(world, horizon_days) if baseline is None else baseline
    n = world.n_communities
    out = np.empty(n)
    for c in range(n):
        frac = np.zeros(n)
        frac[c] = 1.0
        res = run(world, ModelKind.BD, VaccinePlan(frac, np.zeros(n, dtype=np.int64)),
                  DETERMINISTIC, horizon_days)
        out[c] = base.total_deaths - res.total_deaths
    return out


@dataclass(frozen=True)
class IndexTable:
    community_ids: tuple
    population: np.ndarray
    community_risk: np.ndarray
    societal_harm: np.ndarray
    older_adult_fraction: np.ndarray
    income: np.ndarray
    essential_worker_fraction: np.ndarray

    COLUMNS = ("community_id", "population", "community_risk", "societal_harm",
               "older_adult_fraction", "income", "essential_worker_fraction")

    def __len__(self) -> int:
        return len(self.community_ids)

    def rows(self):
        for i, cid in enumerate(self.community_ids):
            yield (cid, self.population[i], self.community_risk[i], self.societal_harm[i],
                   self.older_adult_fraction[i], self.income[i], self.essential_worker_fraction[i])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def build_index_table(world: World, horizon_days: int | None = None,
                      baseline: SimulationResult | None = None,
                      method: str = ANALYTIC) -> IndexTable:
    return IndexTable(
        community_ids=tuple(world.community_ids),
        population=np.asarray(world.population, dtype=np.float64),
        community_risk=community_risk(world, horizon_days),
        societal_harm=societal_harm(world, horizon_days, baseline, method),
        older_adult_fraction=world.older_adult_fraction,
        income=np.asarray(world.income, dtype=np.float64),
        essential_worker_fraction=np.asarray(world.essential_fraction, dtype=np.float64),
    )

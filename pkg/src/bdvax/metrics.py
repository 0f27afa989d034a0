"""Social utility, Gini-based equity and the overall-performance score."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import OutcomeReport, World
from .engine import DIMENSIONS, SimulationResult, group_rates
from .errors import DimensionError, UndefinedBaselineError, ValidationError


def gini(values, weights=None) -> float:
    """Weighted Gini: sum_ij w_i w_j |v_i - v_j| / (2 * sum(w) * sum(w v)).

    Uses the sorted cumulative form, O(n log n). Returns 0 when sum(w v) == 0.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if v.shape != w.shape:
        raise DimensionError(f"gini: {v.size} values but {w.size} weights")
    if v.size == 0:
        return 0.0
    if np.any(v < 0) or np.any(w < 0) or not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
        raise ValidationError("gini: values and weights must be finite and nonnegative")
    sw = w.sum()
    swv = float(np.dot(w, v))
    if sw <= 0 or swv <= 0:
        return 0.0
    order = np.argsort(v, kind="stable")
    vs, ws = v[order], w[order]
    # sum_{i<j} w_i w_j (v_j - v_i) = sum_j w_j v_j W_{<j} - w_j (WV)_{<j}
    cw = np.cumsum(ws) - ws
    cwv = np.cumsum(ws * vs) - ws * vs
    pair = np.sum(ws * (vs * cw - cwv))
    g = pair / (sw * swv)
    return float(min(max(g, 0.0), 1.0))


def gini_bruteforce(values, weights=None) -> float:
    """O(n^2) reference for :func:`gini`."""
    v = np.asarray(values, dtype=np.float64)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=np.float64)
    swv = float(np.dot(w, v))
    if swv <= 0:
        return 0.0
    return float(np.sum(np.outer(w, w) * np.abs(v[:, None] - v[None, :])) / (2 * w.sum() * swv))


def fatality_rate(result: SimulationResult, world: World) -> float:
    return result.total_deaths / world.total_population


def _relative_drop(base: float, new: float, what: str) -> float:
    if base == 0:
        raise UndefinedBaselineError(f"{what} of the reference run is zero")
    return (base - new) / base


def social_utility_change(vaccinated: SimulationResult, unvaccinated: SimulationResult,
                          world: World) -> float:
    """Relative fall in overall fatality rate; positive means fewer deaths."""
    _same_shape(vaccinated, unvaccinated)
    return _relative_drop(fatality_rate(unvaccinated, world), fatality_rate(vaccinated, world),
                          "fatality rate")


def group_gini(deaths, world: World, dimension: str, n_groups: int = 5) -> float:
    rates, pops = group_rates(deaths, world, dimension, n_groups)
    return gini(rates, pops)


def equity_change(vaccinated: SimulationResult, unvaccinated: SimulationResult, world: World,
                  dimension: str, n_groups: int = 5) -> float:
    """Relative fall in the Gini of group mortality rates along ``dimension``."""
    _same_shape(vaccinated, unvaccinated)
    g0 = group_gini(unvaccinated.per_community_cumulative_deaths, world, dimension, n_groups)
    g1 = group_gini(vaccinated.per_community_cumulative_deaths, world, dimension, n_groups)
    return _relative_drop(g0, g1, f"{dimension} Gini")


def overall_performance(report: OutcomeReport) -> float:
    return report.overall_performance


def _same_shape(a: SimulationResult, b: SimulationResult) -> None:
    if a.per_community_cumulative_deaths.shape != b.per_community_cumulative_deaths.shape:
        raise DimensionError("results come from worlds of different size")


@dataclass(frozen=True)
class EquityBreakdown:
    gini_age: float
    gini_income: float
    gini_occupation: float
    group_rates: dict
    group_populations: dict

    def gini_of(self, dimension: str) -> float:
        return getattr(self, f"gini_{dimension}")


def equity_breakdown(deaths, world: World, n_groups: int = 5) -> EquityBreakdown:
    rates, pops, ginis = {}, {}, {}
    for dim in DIMENSIONS:
        rates[dim], pops[dim] = group_rates(np.asarray(deaths, dtype=np.float64), world, dim, n_groups)
        ginis[dim] = gini(rates[dim], pops[dim])
    return EquityBreakdown(ginis["age"], ginis["income"], ginis["occupation"], rates, pops)


def community_gini(result: SimulationResult, world: World) -> float:
    """Secondary output: Gini over raw per-community fatality rates."""
    return gini(result.per_community_cumulative_deaths / world.population, world.population)


def evaluate(vaccinated: SimulationResult, reference: SimulationResult, world: World,
             n_groups: int = 5) -> OutcomeReport:
    """All four relative changes of ``vaccinated`` against ``reference``."""
    _same_shape(vaccinated, reference)
    ref = equity_breakdown(reference.per_community_cumulative_deaths, world, n_groups)
    new = equity_breakdown(vaccinated.per_community_cumulative_deaths, world, n_groups)
    changes = {dim: _relative_drop(ref.gini_of(dim), new.gini_of(dim), f"{dim} Gini")
               for dim in DIMENSIONS}
    return OutcomeReport(
        utility_change=social_utility_change(vaccinated, reference, world),
        equity_change_age=changes["age"],
        equity_change_income=changes["income"],
        equity_change_occupation=changes["occupation"],
    )

"""Domain types and the on-disk world bundle format.

A world bundle is a directory holding::

    communities.csv     id,population,income,essential_frac,age_frac_0..age_frac_K
    pois.csv            id,area,dwell_time
    mobility.csv        hour,community_id,poi_id,weight   (sparse, omitted = 0)
    params.csv          key,value
    observed_deaths.csv day,deaths                        (optional)

Numbers are written with ``repr`` so that a save/load cycle is exact.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, ParseError, ValidationError

# Verity et al. (2020) age-specific infection fatality ratios, decadal bands.
DEFAULT_AGE_BAND_LOWER = (0, 10, 20, 30, 40, 50, 60, 70, 80)
DEFAULT_IFR_BY_AGE = (
    1.61e-5, 6.95e-5, 3.09e-4, 8.44e-4, 1.61e-3, 5.95e-3, 1.93e-2, 4.28e-2, 7.80e-2,
)

FRACTION_TOL = 1e-9


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Community:
    id: str
    population: float
    age_fractions: np.ndarray
    older_adult_fraction: float
    mean_household_income: float
    essential_worker_fraction: float


@dataclass(frozen=True)
class Poi:
    id: str
    area: float
    dwell_time: float


@dataclass(frozen=True)
class EpidemicParams:
    """Epidemic rates. Periods and delays are in days, ``beta_base`` is per day,
    ``beta_poi`` is per contact-hour."""

    beta_poi: float = 0.06
    beta_base: float = 0.02
    latency_period: float = 4.0
    infectious_period: float = 3.5
    ifr_by_age: tuple = DEFAULT_IFR_BY_AGE
    age_band_lower: tuple = DEFAULT_AGE_BAND_LOWER
    initial_infected_fraction: float = 0.005
    death_delay: float = 14.0
    older_cutoff: float = 60.0
    vaccine_efficacy: float = 1.0
    max_trips_per_hour: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "ifr_by_age", tuple(float(x) for x in self.ifr_by_age))
        object.__setattr__(self, "age_band_lower", tuple(float(x) for x in self.age_band_lower))

    @property
    def n_bands(self) -> int:
        return len(self.ifr_by_age)

    @property
    def older_band_mask(self) -> np.ndarray:
        return np.asarray(self.age_band_lower) >= self.older_cutoff

    def validate(self) -> None:
        for name in ("beta_poi", "beta_base", "death_delay", "vaccine_efficacy"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(f"params: {name} must be finite and >= 0, got {value}")
        for name in ("latency_period", "infectious_period", "max_trips_per_hour"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"params: {name} must be > 0, got {value}")
        if not 0.0 <= self.initial_infected_fraction <= 1.0:
            raise ValidationError("params: initial_infected_fraction must lie in [0, 1]")
        if self.vaccine_efficacy > 1.0:
            raise ValidationError("params: vaccine_efficacy must lie in [0, 1]")
        if len(self.age_band_lower) != len(self.ifr_by_age):
            raise DimensionError(
                f"params: {len(self.age_band_lower)} age bands but {len(self.ifr_by_age)} IFR values"
            )
        if len(self.ifr_by_age) == 0:
            raise ValidationError("params: at least one age band is required")
        if any(not 0.0 <= x <= 1.0 for x in self.ifr_by_age):
            raise ValidationError("params: ifr_by_age entries must lie in [0, 1]")
        if list(self.age_band_lower) != sorted(self.age_band_lower):
            raise ValidationError("params: age bands must be listed in ascending order")

    def with_values(self, **changes) -> "EpidemicParams":
        return replace(self, **changes)

    def to_rows(self) -> list[tuple[str, str]]:
        rows = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "ifr_by_age":
                rows += [(f"ifr_{i}", repr(float(v))) for i, v in enumerate(value)]
            elif f.name == "age_band_lower":
                rows += [(f"age_band_lower_{i}", repr(float(v))) for i, v in enumerate(value)]
            else:
                rows.append((f.name, repr(float(value))))
        return rows

    @classmethod
    def from_mapping(cls, mapping: dict[str, float]) -> "EpidemicParams":
        mapping = dict(mapping)
        ifr = _pop_indexed(mapping, "ifr_")
        lower = _pop_indexed(mapping, "age_band_lower_")
        scalar_names = {f.name for f in fields(cls)} - {"ifr_by_age", "age_band_lower"}
        unknown = set(mapping) - scalar_names
        if unknown:
            raise ConfigError(f"params: unknown keys {sorted(unknown)}")
        kwargs = dict(mapping)
        if ifr is not None:
            kwargs["ifr_by_age"] = ifr
        if lower is not None:
            kwargs["age_band_lower"] = lower
        return cls(**kwargs)


def _pop_indexed(mapping: dict, prefix: str):
    keys = [k for k in mapping if k.startswith(prefix) and k[len(prefix):].isdigit()]
    if not keys:
        return None
    idx = sorted(int(k[len(prefix):]) for k in keys)
    if idx != list(range(len(idx))):
        raise ConfigError(f"params: {prefix}* keys must be numbered 0..K without gaps")
    values = tuple(mapping.pop(f"{prefix}{i}") for i in idx)
    return values


@dataclass(frozen=True, eq=False)
class MobilityTensor:
    """Sparse hourly visit weights ``w[t][c][p]`` in hour-major COO layout.

    Entries of hour ``t`` occupy ``hour_ptr[t]:hour_ptr[t + 1]`` and are sorted
    by (community, poi) inside the hour.
    """

    hours: int
    n_communities: int
    n_pois: int
    hour_ptr: np.ndarray
    community: np.ndarray
    poi: np.ndarray
    weight: np.ndarray

    @classmethod
    def from_entries(cls, hours, n_communities, n_pois, hour, community, poi, weight):
        hour = np.asarray(hour, dtype=np.int64)
        community = np.asarray(community, dtype=np.int64)
        poi = np.asarray(poi, dtype=np.int64)
        weight = np.asarray(weight, dtype=np.float64)
        if not (hour.shape == community.shape == poi.shape == weight.shape):
            raise DimensionError("mobility: entry arrays differ in length")
        if hour.size:
            if hour.min() < 0 or hour.max() >= hours:
                raise ValidationError("mobility: hour index out of range")
            if community.min() < 0 or community.max() >= n_communities:
                raise ValidationError("mobility: community index out of range")
            if poi.min() < 0 or poi.max() >= n_pois:
                raise ValidationError("mobility: POI index out of range")
            key = (hour * n_communities + community) * n_pois + poi
            if np.any(np.diff(key) <= 0):
                order = np.argsort(key, kind="stable")
                key, hour, community, poi, weight = (
                    key[order], hour[order], community[order], poi[order], weight[order])
                uniq, start = np.unique(key, return_index=True)
                if uniq.size != key.size:
                    weight = np.add.reduceat(weight, start)
                    hour, community, poi = hour[start], community[start], poi[start]
        hour_ptr = np.searchsorted(hour, np.arange(hours + 1), side="left").astype(np.int64)
        return cls(
            hours=int(hours),
            n_communities=int(n_communities),
            n_pois=int(n_pois),
            hour_ptr=_frozen_array(hour_ptr, np.int64),
            community=_frozen_array(community, np.int32),
            poi=_frozen_array(poi, np.int32),
            weight=_frozen_array(weight, np.float64),
        )

    @classmethod
    def empty(cls, hours, n_communities, n_pois):
        return cls.from_entries(hours, n_communities, n_pois, [], [], [], [])

    @property
    def nnz(self) -> int:
        return int(self.weight.size)

    def entry_hours(self) -> np.ndarray:
        return np.repeat(np.arange(self.hours), np.diff(self.hour_ptr))

    def hour_entries(self, t: int):
        lo, hi = self.hour_ptr[t], self.hour_ptr[t + 1]
        return self.community[lo:hi], self.poi[lo:hi], self.weight[lo:hi]

    def community_totals(self, hours: int | None = None) -> np.ndarray:
        """Total visits per community over the first ``hours`` hours."""
        end = self.hour_ptr[self.hours if hours is None else hours]
        return np.bincount(self.community[:end], weights=self.weight[:end],
                           minlength=self.n_communities)

    def hourly_community_totals(self) -> np.ndarray:
        """Visits per (entry-hour, community) pair, as a dense hours x n array."""
        flat = self.entry_hours() * self.n_communities + self.community
        totals = np.bincount(flat, weights=self.weight,
                             minlength=self.hours * self.n_communities)
        return totals.reshape(self.hours, self.n_communities)

    def scaled(self, factor: float) -> "MobilityTensor":
        return replace(self, weight=_frozen_array(self.weight * factor))


@dataclass(frozen=True, eq=False)
class World:
    """Immutable scenario: communities, POIs, mobility and epidemic params.

    Community attributes are stored column-wise; ``communities`` and ``pois``
    materialise the row views on demand.
    """

    community_ids: tuple
    population: np.ndarray
    age_fractions: np.ndarray
    income: np.ndarray
    essential_fraction: np.ndarray
    poi_ids: tuple
    poi_area: np.ndarray
    poi_dwell: np.ndarray
    mobility: MobilityTensor
    params: EpidemicParams = field(default_factory=EpidemicParams)
    observed_daily_deaths: np.ndarray | None = None

    @classmethod
    def build(cls, community_ids, population, age_fractions, income, essential_fraction,
              poi_ids, poi_area, poi_dwell, mobility, params=None, observed_daily_deaths=None,
              validate=True) -> "World":
        age = np.array(age_fractions, dtype=np.float64, ndmin=2)
        if age.size == 0:
            age = age.reshape(len(community_ids), -1)
        world = cls(
            community_ids=tuple(str(x) for x in community_ids),
            population=_frozen_array(population),
            age_fractions=_frozen_array(age),
            income=_frozen_array(income),
            essential_fraction=_frozen_array(essential_fraction),
            poi_ids=tuple(str(x) for x in poi_ids),
            poi_area=_frozen_array(poi_area),
            poi_dwell=_frozen_array(poi_dwell),
            mobility=mobility,
            params=params if params is not None else EpidemicParams(),
            observed_daily_deaths=(None if observed_daily_deaths is None
                                   else _frozen_array(observed_daily_deaths)),
        )
        if validate:
            world.validate()
        return world

    # -- derived views -----------------------------------------------------
    @property
    def n_communities(self) -> int:
        return len(self.community_ids)

    @property
    def n_pois(self) -> int:
        return len(self.poi_ids)

    @property
    def hours(self) -> int:
        return self.mobility.hours

    @property
    def days(self) -> int:
        return self.mobility.hours // 24

    @property
    def total_population(self) -> float:
        return float(self.population.sum())

    @property
    def older_adult_fraction(self) -> np.ndarray:
        return self.age_fractions[:, self.params.older_band_mask].sum(axis=1)

    @property
    def poi_factor(self) -> np.ndarray:
        """dwell_time / area per POI."""
        return self.poi_dwell / self.poi_area

    def per_capita_mobility(self) -> np.ndarray:
        return self.mobility.community_totals() / self.population

    @property
    def communities(self) -> list[Community]:
        older = self.older_adult_fraction
        return [
            Community(cid, float(self.population[i]), self.age_fractions[i], float(older[i]),
                      float(self.income[i]), float(self.essential_fraction[i]))
            for i, cid in enumerate(self.community_ids)
        ]

    @property
    def pois(self) -> list[Poi]:
        return [Poi(pid, float(self.poi_area[j]), float(self.poi_dwell[j]))
                for j, pid in enumerate(self.poi_ids)]

    def community_index(self) -> dict[str, int]:
        return {cid: i for i, cid in enumerate(self.community_ids)}

    def with_params(self, params: EpidemicParams | None = None, **changes) -> "World":
        params = params if params is not None else self.params
        if changes:
            params = replace(params, **changes)
        return replace(self, params=params)

    def with_observed(self, observed) -> "World":
        return replace(self, observed_daily_deaths=_frozen_array(observed))

    # -- invariants ----------------------------------------------------------
    def validate(self) -> None:
        p = self.params
        p.validate()
        n, m = self.n_communities, self.n_pois
        if len(set(self.community_ids)) != n:
            raise ValidationError("communities: duplicate community id")
        if len(set(self.poi_ids)) != m:
            raise ValidationError("pois: duplicate POI id")
        for name, arr in (("population", self.population), ("income", self.income),
                          ("essential_frac", self.essential_fraction)):
            if arr.shape != (n,):
                raise DimensionError(f"communities: {name} has shape {arr.shape}, expected ({n},)")
        if self.age_fractions.shape != (n, p.n_bands):
            raise DimensionError(
                f"communities: age fractions have {self.age_fractions.shape[-1]} bands, "
                f"params define {p.n_bands}")
        for i, cid in enumerate(self.community_ids):
            if not (math.isfinite(self.population[i]) and self.population[i] >= 1):
                raise ValidationError(f"community {cid}: population must be >= 1")
            if not (math.isfinite(self.income[i]) and self.income[i] > 0):
                raise ValidationError(f"community {cid}: income must be > 0")
            if not 0.0 <= self.essential_fraction[i] <= 1.0:
                raise ValidationError(f"community {cid}: essential worker fraction outside [0, 1]")
            row = self.age_fractions[i]
            if np.any(row < 0) or np.any(row > 1) or not np.all(np.isfinite(row)):
                raise ValidationError(f"community {cid}: age fraction outside [0, 1]")
            if abs(row.sum() - 1.0) > FRACTION_TOL:
                raise ValidationError(
                    f"community {cid}: age fractions sum to {row.sum():.12g}, expected 1")
        if self.poi_area.shape != (m,) or self.poi_dwell.shape != (m,):
            raise DimensionError("pois: area/dwell arrays do not match POI count")
        for j, pid in enumerate(self.poi_ids):
            if not (math.isfinite(self.poi_area[j]) and self.poi_area[j] > 0):
                raise ValidationError(f"poi {pid}: area must be > 0")
            if not (math.isfinite(self.poi_dwell[j]) and self.poi_dwell[j] > 0):
                raise ValidationError(f"poi {pid}: dwell_time must be > 0")
        mob = self.mobility
        if mob.n_communities != n or mob.n_pois != m:
            raise DimensionError("mobility: tensor shape does not match world")
        if mob.hours <= 0 or mob.hours % 24:
            raise ValidationError(f"mobility: hours={mob.hours} is not a positive multiple of 24")
        if mob.nnz:
            if not np.all(np.isfinite(mob.weight)) or mob.weight.min() < 0:
                raise ValidationError("mobility: weights must be finite and >= 0")
            per_hour = mob.hourly_community_totals()
            limit = self.population * p.max_trips_per_hour
            over = per_hour > limit[None, :] * (1 + 1e-12)
            if over.any():
                t, c = np.argwhere(over)[0]
                raise ValidationError(
                    f"community {self.community_ids[c]}: {per_hour[t, c]:.6g} visits in hour {t} "
                    f"exceed max_trips_per_hour x population")
        if self.observed_daily_deaths is not None:
            obs = self.observed_daily_deaths
            if obs.ndim != 1 or np.any(obs < 0) or not np.all(np.isfinite(obs)):
                raise ValidationError("observed deaths must be a finite nonnegative vector")


def worlds_equal(a: World, b: World, rtol: float = 0.0) -> bool:
    """Structural equality; ``rtol=0`` demands bit-identical numbers."""

    def close(x, y):
        x, y = np.asarray(x), np.asarray(y)
        if x.shape != y.shape:
            return False
        if rtol == 0:
            return bool(np.array_equal(x, y))
        return bool(np.allclose(x, y, rtol=rtol, atol=0))

    if a.community_ids != b.community_ids or a.poi_ids != b.poi_ids:
        return False
    if a.params != b.params:
        return False
    ma, mb = a.mobility, b.mobility
    if (ma.hours, ma.n_communities, ma.n_pois) != (mb.hours, mb.n_communities, mb.n_pois):
        return False
    pairs = [
        (a.population, b.population), (a.age_fractions, b.age_fractions),
        (a.income, b.income), (a.essential_fraction, b.essential_fraction),
        (a.poi_area, b.poi_area), (a.poi_dwell, b.poi_dwell),
        (ma.hour_ptr, mb.hour_ptr), (ma.community, mb.community), (ma.poi, mb.poi),
        (ma.weight, mb.weight),
    ]
    if (a.observed_daily_deaths is None) != (b.observed_daily_deaths is None):
        return False
    if a.observed_daily_deaths is not None:
        pairs.append((a.observed_daily_deaths, b.observed_daily_deaths))
    return all(close(x, y) for x, y in pairs)


# ---------------------------------------------------------------------------
# Simulation state and plans


@dataclass
class CompartmentState:
    """Per-community occupancy. Mutable; owned by a single run.

    ``pending`` holds deaths already determined but not yet accounted, one
    column per hour of the death delay (a ring buffer indexed by hour).
    """

    susceptible: np.ndarray
    exposed: np.ndarray
    infectious: np.ndarray
    recovered: np.ndarray
    vaccinated: np.ndarray
    deaths: np.ndarray
    pending: np.ndarray

    @classmethod
    def zeros(cls, n: int, delay_hours: int) -> "CompartmentState":
        z = lambda: np.zeros(n)  # noqa: E731
        return cls(z(), z(), z(), z(), z(), z(), np.zeros((n, max(delay_hours, 1))))

    def copy(self) -> "CompartmentState":
        return CompartmentState(*(np.array(getattr(self, f.name)) for f in fields(self)))

    def totals(self) -> np.ndarray:
        return (self.susceptible + self.exposed + self.infectious + self.recovered
                + self.vaccinated + self.deaths)

    def check(self, population: np.ndarray, tol: float = 1e-6) -> None:
        for f in fields(self):
            arr = getattr(self, f.name)
            if np.any(arr < 0):
                raise ValidationError(f"state: negative {f.name}")
        err = np.abs(self.totals() - population)
        if np.any(err > tol * np.maximum(population, 1.0)):
            raise ValidationError(f"state: conservation violated by {err.max():.3g}")


@dataclass(frozen=True, eq=False)
class VaccinePlan:
    fraction: np.ndarray
    day: np.ndarray
    budget_fraction: float = 0.0
    shortfall: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "fraction", _frozen_array(self.fraction))
        object.__setattr__(self, "day", _frozen_array(self.day, np.int64))
        if self.fraction.shape != self.day.shape:
            raise DimensionError("plan: fraction and day vectors differ in length")
        if np.any(self.fraction < 0) or np.any(self.fraction > 1):
            raise ValidationError("plan: vaccinated fraction outside [0, 1]")
        if np.any(self.day < 0):
            raise ValidationError("plan: administration day must be >= 0")

    @property
    def has_shortfall(self) -> bool:
        return self.shortfall > 1e-9

    @classmethod
    def none(cls, n: int) -> "VaccinePlan":
        return cls(np.zeros(n), np.zeros(n, dtype=np.int64))

    def doses(self, population) -> float:
        return float(np.dot(self.fraction, population))

    def coverage(self, population) -> float:
        return self.doses(population) / float(np.sum(population))

    def check(self, population, acceptance=None, tol=1e-9) -> None:
        if acceptance is not None and np.any(self.fraction > np.asarray(acceptance) + tol):
            raise ValidationError("plan: vaccinated fraction exceeds acceptance cap")
        if self.coverage(population) > self.budget_fraction + tol:
            raise ValidationError("plan: population coverage exceeds budget")


@dataclass(frozen=True)
class OutcomeReport:
    """Relative changes against a reference run; positive means improvement."""

    utility_change: float
    equity_change_age: float
    equity_change_income: float
    equity_change_occupation: float

    @property
    def overall_performance(self) -> float:
        return (self.utility_change + self.equity_change_age + self.equity_change_income
                + self.equity_change_occupation)

    def as_dict(self) -> dict[str, float]:
        return {
            "utility_change": self.utility_change,
            "equity_change_age": self.equity_change_age,
            "equity_change_income": self.equity_change_income,
            "equity_change_occupation": self.equity_change_occupation,
            "overall_performance": self.overall_performance,
        }


# ---------------------------------------------------------------------------
# Bundle IO

COMMUNITIES_FILE = "communities.csv"
POIS_FILE = "pois.csv"
MOBILITY_FILE = "mobility.csv"
PARAMS_FILE = "params.csv"
OBSERVED_FILE = "observed_deaths.csv"


def _fmt(x) -> str:
    return repr(float(x))


def _read_rows(path: Path, required: Sequence[str]):
    """Yield (line_number, row_dict); checks the header."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, 0, f"cannot open: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header row") from None
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(path, 1, f"missing columns {missing}")
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num,
                                 f"expected {len(header)} fields, found {len(row)}")
            yield reader.line_num, header, row


def _num(path, line, text, what):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, f"{what}: not a number: {text!r}") from None
    return value


def load_world(path) -> World:
    """Read a world bundle directory and validate it."""
    root = Path(path)
    if not root.is_dir():
        raise ParseError(root, 0, "world bundle directory not found")

    # params first: band count drives the communities columns
    p_path = root / PARAMS_FILE
    mapping = {}
    for line, header, row in _read_rows(p_path, ("key", "value")):
        rec = dict(zip(header, row))
        mapping[rec["key"].strip()] = _num(p_path, line, rec["value"], rec["key"])
    declared_hours = mapping.pop("hours", None)
    try:
        params = EpidemicParams.from_mapping(mapping)
    except TypeError as exc:
        raise ParseError(p_path, 0, str(exc)) from None

    c_path = root / COMMUNITIES_FILE
    ids, pop, inc, ess, ages = [], [], [], [], []
    age_cols = None
    for line, header, row in _read_rows(c_path, ("id", "population", "income", "essential_frac")):
        if age_cols is None:
            age_cols = sorted((c for c in header if c.startswith("age_frac_")),
                              key=lambda c: int(c[len("age_frac_"):]))
            if not age_cols:
                raise ParseError(c_path, 1, "no age_frac_* columns")
        rec = dict(zip(header, row))
        ids.append(rec["id"].strip())
        pop.append(_num(c_path, line, rec["population"], "population"))
        inc.append(_num(c_path, line, rec["income"], "income"))
        ess.append(_num(c_path, line, rec["essential_frac"], "essential_frac"))
        ages.append([_num(c_path, line, rec[c], c) for c in age_cols])
    n_bands = len(age_cols) if age_cols else params.n_bands
    age_arr = np.array(ages, dtype=np.float64).reshape(len(ids), n_bands)

    q_path = root / POIS_FILE
    pids, area, dwell = [], [], []
    for line, header, row in _read_rows(q_path, ("id", "area", "dwell_time")):
        rec = dict(zip(header, row))
        pids.append(rec["id"].strip())
        area.append(_num(q_path, line, rec["area"], "area"))
        dwell.append(_num(q_path, line, rec["dwell_time"], "dwell_time"))

    cindex = {cid: i for i, cid in enumerate(ids)}
    pindex = {pid: j for j, pid in enumerate(pids)}
    m_path = root / MOBILITY_FILE
    hh, cc, pp, ww = [], [], [], []
    for line, header, row in _read_rows(m_path, ("hour", "community_id", "poi_id", "weight")):
        rec = dict(zip(header, row))
        h = _num(m_path, line, rec["hour"], "hour")
        if h != int(h):
            raise ParseError(m_path, line, f"hour must be an integer, got {rec['hour']!r}")
        cid, pid = rec["community_id"].strip(), rec["poi_id"].strip()
        if cid not in cindex:
            raise ParseError(m_path, line, f"unknown community id {cid!r}")
        if pid not in pindex:
            raise ParseError(m_path, line, f"unknown POI id {pid!r}")
        hh.append(int(h))
        cc.append(cindex[cid])
        pp.append(pindex[pid])
        ww.append(_num(m_path, line, rec["weight"], "weight"))
    if declared_hours is not None:
        hours = int(declared_hours)
    else:
        top = (max(hh) + 1) if hh else 24
        hours = int(math.ceil(top / 24) * 24)

    observed = None
    o_path = root / OBSERVED_FILE
    if o_path.exists():
        days_vals = []
        for line, header, row in _read_rows(o_path, ("day", "deaths")):
            rec = dict(zip(header, row))
            days_vals.append((int(_num(o_path, line, rec["day"], "day")),
                              _num(o_path, line, rec["deaths"], "deaths")))
        days_vals.sort()
        if [d for d, _ in days_vals] != list(range(len(days_vals))):
            raise ParseError(o_path, 0, "days must run 0..D-1 without gaps")
        observed = [v for _, v in days_vals]

    mobility = MobilityTensor.from_entries(hours, len(ids), len(pids), hh, cc, pp, ww)
    return World.build(ids, pop, age_arr, inc, ess, pids, area, dwell, mobility,
                       params=params, observed_daily_deaths=observed)


def save_world(world: World, path) -> None:
    """Write ``world`` as a bundle directory (created if needed)."""
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
        _write_bundle(world, root)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write world bundle to {root}: {exc.strerror}") from exc


def _write_bundle(world: World, root: Path) -> None:
    k = world.age_fractions.shape[1]
    with open(root / COMMUNITIES_FILE, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "population", "income", "essential_frac"]
                   + [f"age_frac_{b}" for b in range(k)])
        for i, cid in enumerate(world.community_ids):
            w.writerow([cid, _fmt(world.population[i]), _fmt(world.income[i]),
                        _fmt(world.essential_fraction[i])]
                       + [_fmt(x) for x in world.age_fractions[i]])
    with open(root / POIS_FILE, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "area", "dwell_time"])
        for j, pid in enumerate(world.poi_ids):
            w.writerow([pid, _fmt(world.poi_area[j]), _fmt(world.poi_dwell[j])])
    mob = world.mobility
    cids = np.asarray(world.community_ids, dtype=object)
    pids = np.asarray(world.poi_ids, dtype=object)
    with open(root / MOBILITY_FILE, "w", newline="", encoding="utf-8") as fh:
        fh.write("hour,community_id,poi_id,weight\n")
        hours = mob.entry_hours()
        lines = (f"{h},{c},{p},{float(x)!r}\n" for h, c, p, x in
                 zip(hours.tolist(), cids[mob.community].tolist(),
                     pids[mob.poi].tolist(), mob.weight.tolist()))
        fh.writelines(lines)
    with open(root / PARAMS_FILE, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerow(["hours", str(mob.hours)])
        w.writerows(world.params.to_rows())
    obs_path = root / OBSERVED_FILE
    if world.observed_daily_deaths is not None:
        with open(obs_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["day", "deaths"])
            for d, v in enumerate(world.observed_daily_deaths):
                w.writerow([d, _fmt(v)])
    elif obs_path.exists():
        obs_path.unlink()


def read_plan(path, world: World) -> VaccinePlan:
    """Plan CSV: community_id,fraction,day. Communities not listed get 0."""
    path = Path(path)
    index = world.community_index()
    frac = np.zeros(world.n_communities)
    day = np.zeros(world.n_communities, dtype=np.int64)
    for line, header, row in _read_rows(path, ("community_id", "fraction", "day")):
        rec = dict(zip(header, row))
        cid = rec["community_id"].strip()
        if cid not in index:
            raise ParseError(path, line, f"unknown community id {cid!r}")
        frac[index[cid]] = _num(path, line, rec["fraction"], "fraction")
        d = _num(path, line, rec["day"], "day")
        if d != int(d):
            raise ParseError(path, line, "day must be an integer")
        day[index[cid]] = int(d)
    return VaccinePlan(frac, day, budget_fraction=float(np.dot(frac, world.population)
                                                        / world.total_population))


def write_plan(plan: VaccinePlan, world: World, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["community_id", "fraction", "day"])
        for i, cid in enumerate(world.community_ids):
            w.writerow([cid, _fmt(plan.fraction[i]), int(plan.day[i])])


def iter_csv(path, required: Iterable[str]):
    """Public wrapper over the bundle CSV reader for sibling modules."""
    yield from _read_rows(Path(path), tuple(required))

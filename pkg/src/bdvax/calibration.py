"""Grid / random search calibration against an observed daily-death curve."""
from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import EpidemicParams, World, iter_csv
from .engine import DETERMINISTIC, ModelKind, run
from .errors import ConfigError, DimensionError, ParseError, UndefinedBaselineError

CALIBRATED = ("beta_poi", "beta_base", "initial_infected_fraction")


def nrmse(predicted, observed) -> float:
    """RMSE normalised by the observed mean."""
    p = np.asarray(predicted, dtype=np.float64)
    o = np.asarray(observed, dtype=np.float64)
    if p.shape != o.shape or p.ndim != 1 or p.size == 0:
        raise DimensionError(f"nrmse: shapes {p.shape} and {o.shape} differ or are empty")
    mean = o.mean()
    if mean <= 0:
        raise UndefinedBaselineError("nrmse: observed mean is not positive")
    return float(np.sqrt(np.mean((p - o) ** 2)) / mean)


@dataclass(frozen=True)
class ParamRange:
    name: str
    low: float
    high: float
    steps: int | None = None
    samples: int | None = None

    def __post_init__(self):
        if self.name not in EpidemicParams.__dataclass_fields__:
            raise ConfigError(f"calibration: unknown parameter {self.name!r}")
        if (self.steps is None) == (self.samples is None):
            raise ConfigError(f"calibration: {self.name} needs exactly one of steps or samples")
        count = self.steps if self.steps is not None else self.samples
        if count < 1:
            raise ConfigError(f"calibration: {self.name} needs at least one point")
        if self.steps == 1:
            if self.low > self.high:
                raise ConfigError(f"calibration: {self.name} min exceeds max")
        elif not self.low < self.high:
            raise ConfigError(f"calibration: {self.name} needs min < max")

    def grid(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([self.low])
        return np.linspace(self.low, self.high, self.steps)


@dataclass(frozen=True)
class CalibrationSpec:
    search_space: tuple
    acceptance_band: float = 1.5
    objective: str = "nrmse"
    mode: str = DETERMINISTIC
    max_evaluations: int | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "search_space", tuple(self.search_space))
        if not self.search_space:
            raise ConfigError("calibration: empty search space")
        names = [r.name for r in self.search_space]
        if len(set(names)) != len(names):
            raise ConfigError("calibration: parameter listed twice")
        if self.acceptance_band < 1:
            raise ConfigError("calibration: acceptance band must be >= 1")
        if self.objective != "nrmse":
            raise ConfigError(f"calibration: unsupported objective {self.objective!r}")
        if self.mode != DETERMINISTIC:
            raise ConfigError("calibration runs in deterministic mode only")

    def candidates(self) -> list[dict[str, float]]:
        """Full grid when every range has steps; seeded uniform samples otherwise."""
        if all(r.steps is not None for r in self.search_space):
            axes = [r.grid() for r in self.search_space]
            pts = [dict(zip((r.name for r in self.search_space), map(float, vals)))
                   for vals in itertools.product(*axes)]
        else:
            count = max(r.samples or r.steps for r in self.search_space)
            rng = np.random.default_rng(self.seed)
            cols = []
            for r in self.search_space:
                if r.steps == 1:
                    cols.append(np.full(count, r.low))
                else:
                    cols.append(rng.uniform(r.low, r.high, size=count))
            pts = [{r.name: float(c[i]) for r, c in zip(self.search_space, cols)}
                   for i in range(count)]
        if self.max_evaluations is not None:
            pts = pts[: int(self.max_evaluations)]
        if not pts:
            raise ConfigError("calibration: empty search space")
        return pts


def default_spec(params: EpidemicParams, steps: int = 10, **kw) -> CalibrationSpec:
    """10x10x10 grid spanning 0.25x..2.5x of the current values."""
    ranges = [ParamRange(name, 0.25 * getattr(params, name), 2.5 * getattr(params, name), steps)
              for name in CALIBRATED]
    return CalibrationSpec(tuple(ranges), **kw)


def read_grid(path, **kw) -> CalibrationSpec:
    """Grid file: CSV with columns param,min,max,steps."""
    ranges = []
    for line, header, row in iter_csv(path, ("param", "min", "max", "steps")):
        rec = dict(zip(header, row))
        try:
            lo, hi, steps = float(rec["min"]), float(rec["max"]), int(rec["steps"])
        except ValueError:
            raise ParseError(path, line, "min/max must be numbers and steps an integer") from None
        ranges.append(ParamRange(rec["param"].strip(), lo, hi, steps))
    return CalibrationSpec(tuple(ranges), **kw)


@dataclass
class CalibrationReport:
    best_params: EpidemicParams
    best_nrmse: float
    band_members: list
    band_envelope: np.ndarray
    evaluated: list = field(default_factory=list)
    best_prediction: np.ndarray | None = None

    def write_csv(self, path) -> None:
        names = sorted(self.evaluated[0][0]) if self.evaluated else []
        band = {tuple(sorted(p.items())) for p, _ in self.band_members}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names + ["nrmse", "in_band", "best"])
            for pt, err in self.evaluated:
                key = tuple(sorted(pt.items()))
                is_best = all(pt[k] == getattr(self.best_params, k) for k in names) \
                    and err == self.best_nrmse
                w.writerow([repr(pt[k]) for k in names]
                           + [repr(err), int(key in band), int(is_best)])


def calibrate(world: World, model=ModelKind.BD, spec: CalibrationSpec | None = None) -> CalibrationReport:
    model = ModelKind.parse(model)
    if world.observed_daily_deaths is None:
        raise ConfigError("calibration needs observed daily deaths in the world")
    observed = np.asarray(world.observed_daily_deaths, dtype=np.float64)
    days = observed.size
    if model is not ModelKind.SEIR and days > world.days:
        raise ConfigError("observed series is longer than the mobility horizon")
    spec = default_spec(world.params) if spec is None else spec
    points = spec.candidates()

    def evaluate(pt):
        trial = world.with_params(world.params.with_values(**pt))
        pred = run(trial, model, None, DETERMINISTIC, days).daily_deaths
        return nrmse(pred, observed), pred

    threads = max(1, int(spec.threads))
    if threads == 1:
        results = [evaluate(pt) for pt in points]
    else:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(evaluate, points))

    errs = np.array([r[0] for r in results])
    best = int(np.argmin(errs))  # first minimum in candidate order
    best_err = float(errs[best])
    limit = spec.acceptance_band * best_err
    members = [i for i in range(len(points)) if errs[i] <= limit]
    preds = np.array([results[i][1] for i in members])
    envelope = np.column_stack([preds.min(axis=0), preds.max(axis=0)])
    return CalibrationReport(
        best_params=world.params.with_values(**points[best]),
        best_nrmse=best_err,
        band_members=[(points[i], float(errs[i])) for i in members],
        band_envelope=envelope,
        evaluated=[(points[i], float(errs[i])) for i in range(len(points))],
        best_prediction=results[best][1],
    )


def write_envelope(report: CalibrationReport, path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "best", "band_min", "band_max"])
        for d, (lo, hi) in enumerate(report.band_envelope):
            w.writerow([d, repr(float(report.best_prediction[d])), repr(float(lo)), repr(float(hi))])

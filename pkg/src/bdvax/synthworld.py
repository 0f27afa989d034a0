"""Synthetic worlds with prescribed demographic/mobility correlations.

Four community attributes are drawn jointly through a Gaussian copula:
older-adult fraction (Beta), mean household income (LogNormal), essential
worker fraction (Beta) and per-capita daily trips (Gamma). Latent correlations
are adjusted (NORTA) so the Pearson correlations of the transformed marginals
hit the requested targets, and the latent sample is re-coloured to carry the
latent correlation exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from .datamodel import EpidemicParams, MobilityTensor, World
from .errors import ConfigError

# order of the copula coordinates
AGE, INCOME, ESSENTIAL, MOBILITY = range(4)
PAIR_NAMES = (
    ("age", "income"), ("age", "essential"), ("income", "essential"),
    ("age", "mobility"), ("income", "mobility"), ("essential", "mobility"),
)
_PAIR_INDEX = ((AGE, INCOME), (AGE, ESSENTIAL), (INCOME, ESSENTIAL),
               (AGE, MOBILITY), (INCOME, MOBILITY), (ESSENTIAL, MOBILITY))

# reported CBG-level correlations
DEFAULT_TARGETS = (0.14, -0.2, 0.28, -0.29, -0.45, 0.39)

# 0:00 .. 23:00; quiet at night, peaks at 8:00 and 18:00
DIURNAL_TEMPLATE = np.array([
    0.2, 0.1, 0.0, 0.0, 0.0, 0.1, 0.5, 1.5, 3.0, 2.0, 1.5, 1.6,
    1.8, 1.5, 1.3, 1.4, 1.8, 2.5, 3.0, 2.2, 1.6, 1.2, 0.8, 0.4,
])
WEEKEND_FACTOR = 0.75


@dataclass(frozen=True)
class SynthConfig:
    n_communities: int = 1000
    n_pois: int = 150
    horizon_days: int = 60
    seed: int = 0
    target_correlations: tuple = DEFAULT_TARGETS
    population_range: tuple = (500, 3000)
    pois_per_community: int = 6
    older_mean: float = 0.18
    older_sd: float = 0.10
    income_median: float = 65000.0
    income_sigma: float = 0.5
    essential_mean: float = 0.30
    essential_sd: float = 0.10
    trips_mean: float = 1.5
    trips_shape: float = 1.0
    poi_distance_scale: float = 0.5
    poi_area_sigma: float = 0.3
    poi_popularity_sigma: float = 0.3
    day_jitter: float = 0.1
    params: EpidemicParams = field(default_factory=EpidemicParams)

    def correlation_matrix(self) -> np.ndarray:
        R = np.eye(4)
        for (i, j), r in zip(_PAIR_INDEX, self.target_correlations):
            R[i, j] = R[j, i] = r
        return R

    def validate(self) -> None:
        for name in ("n_communities", "n_pois", "horizon_days", "pois_per_community"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"synth: {name} must be >= 1")
        if self.pois_per_community > self.n_pois:
            raise ConfigError("synth: pois_per_community exceeds n_pois")
        if len(self.target_correlations) != 6:
            raise ConfigError("synth: six target correlations are required")
        if any(not abs(r) < 1 for r in self.target_correlations):
            raise ConfigError("synth: target correlations must satisfy |r| < 1")
        lo, hi = self.population_range
        if not 1 <= lo <= hi:
            raise ConfigError("synth: population_range must satisfy 1 <= min <= max")
        eig = np.linalg.eigvalsh(self.correlation_matrix())
        if eig.min() < -1e-10:
            raise ConfigError(
                f"synth: target correlation matrix is not positive semi-definite "
                f"(smallest eigenvalue {eig.min():.4f})")
        for name in ("older", "essential"):
            mean, sd = getattr(self, f"{name}_mean"), getattr(self, f"{name}_sd")
            if not (0 < mean < 1 and 0 < sd and sd * sd < mean * (1 - mean)):
                raise ConfigError(f"synth: infeasible Beta moments for {name}")
        if min(self.income_median, self.income_sigma, self.trips_mean, self.trips_shape) <= 0:
            raise ConfigError("synth: marginal parameters must be positive")


def default_synth_config(**overrides) -> SynthConfig:
    return replace(SynthConfig(), **overrides)


def _beta(mean, sd):
    k = mean * (1 - mean) / (sd * sd) - 1
    return stats.beta(mean * k, (1 - mean) * k)


def marginals(config: SynthConfig):
    return (
        _beta(config.older_mean, config.older_sd),
        stats.lognorm(s=config.income_sigma, scale=config.income_median),
        _beta(config.essential_mean, config.essential_sd),
        stats.gamma(a=config.trips_shape, scale=config.trips_mean / config.trips_shape),
    )


_GH_X, _GH_W = np.polynomial.hermite.hermgauss(48)
_GH_Z = np.sqrt(2.0) * _GH_X
_GH_P = _GH_W / np.sqrt(np.pi)


def _transformed_correlation(rho_z, dist_a, dist_b):
    """Pearson correlation of (F_a^-1(Phi(Z1)), F_b^-1(Phi(Z2))) for latent rho_z."""
    za = _GH_Z[:, None]
    zb = rho_z * _GH_Z[:, None] + np.sqrt(1 - rho_z * rho_z) * _GH_Z[None, :]
    ga = dist_a.ppf(np.clip(stats.norm.cdf(za), 1e-14, 1 - 1e-14))
    gb = dist_b.ppf(np.clip(stats.norm.cdf(zb), 1e-14, 1 - 1e-14))
    w = _GH_P[:, None] * _GH_P[None, :]
    ea = np.sum(_GH_P * ga[:, 0])
    eb = np.sum(w * gb)
    cov = np.sum(w * ga * gb) - ea * eb
    return cov / (dist_a.std() * dist_b.std())


def latent_correlation(config: SynthConfig) -> np.ndarray:
    """Copula correlation whose transformed marginals carry the target Pearson r."""
    dists = marginals(config)
    L = np.eye(4)
    for (i, j), target in zip(_PAIR_INDEX, config.target_correlations):
        if target == 0:
            continue
        f = lambda r: _transformed_correlation(r, dists[i], dists[j]) - target  # noqa: E731
        lo, hi = -0.999, 0.999
        if f(lo) > 0 or f(hi) < 0:
            raise ConfigError(f"synth: correlation {target} unreachable for the chosen marginals")
        L[i, j] = L[j, i] = optimize.brentq(f, lo, hi, xtol=1e-10)
    vals, vecs = np.linalg.eigh(L)
    if vals.min() < 0:
        vals = np.clip(vals, 1e-10, None)
        L = vecs @ np.diag(vals) @ vecs.T
        d = np.sqrt(np.diag(L))
        L = L / np.outer(d, d)
    return L


def _matrix_root(R):
    vals, vecs = np.linalg.eigh(R)
    return vecs * np.sqrt(np.clip(vals, 0, None))


def sample_attributes(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """n x 4 array of (older fraction, income, essential fraction, daily trips)."""
    n = config.n_communities
    target = latent_correlation(config)
    z = rng.standard_normal((n, 4))
    if n > 8:
        z -= z.mean(axis=0)
        cov = np.cov(z, rowvar=False)
        white = np.linalg.solve(np.linalg.cholesky(cov), z.T).T
        z = white @ _matrix_root(target).T
    else:
        z = z @ _matrix_root(target).T
    u = np.clip(stats.norm.cdf(z), 1e-12, 1 - 1e-12)
    return np.column_stack([d.ppf(u[:, k]) for k, d in enumerate(marginals(config))])


def age_fractions_from_older(older, params: EpidemicParams) -> np.ndarray:
    """Spread older and younger mass uniformly over their respective bands."""
    mask = params.older_band_mask
    n_old, n_young = int(mask.sum()), int((~mask).sum())
    older = np.asarray(older, dtype=np.float64)
    out = np.zeros((older.size, params.n_bands))
    if n_old:
        out[:, mask] = (older / n_old)[:, None]
    if n_young:
        out[:, ~mask] = ((1 - older) / n_young)[:, None]
    elif n_old:
        out[:, mask] = 1.0 / n_old
    return out


def generate_world(config: SynthConfig | None = None) -> World:
    config = default_synth_config() if config is None else config
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, m, K, days = config.n_communities, config.n_pois, config.pois_per_community, config.horizon_days
    params = config.params

    attrs = sample_attributes(config, rng)
    older, income, essential, trips = attrs.T
    lo, hi = config.population_range
    population = rng.integers(int(lo), int(hi) + 1, size=n).astype(np.float64)

    # POIs and spatial preference
    c_xy = rng.random((n, 2))
    p_xy = rng.random((m, 2))
    area = np.exp(rng.normal(np.log(300.0), config.poi_area_sigma, size=m))
    dwell = rng.gamma(4.0, 0.25, size=m) + 0.1
    popularity = rng.lognormal(0.0, config.poi_popularity_sigma, size=m)
    dist = np.sqrt(((c_xy[:, None, :] - p_xy[None, :, :]) ** 2).sum(axis=2))
    logp = np.log(popularity)[None, :] - dist / config.poi_distance_scale
    keys = logp + rng.gumbel(size=(n, m))
    fav = np.sort(np.argpartition(-keys, K - 1, axis=1)[:, :K], axis=1)
    pref = rng.dirichlet(np.full(K, 2.0), size=n)

    # per-(day, community) activity factor summing to `days`
    weekday = np.array([WEEKEND_FACTOR if d % 7 in (5, 6) else 1.0 for d in range(days)])
    jitter = np.exp(rng.normal(0.0, config.day_jitter, size=(days, n)))
    dayfac = weekday[:, None] * jitter
    dayfac *= days / dayfac.sum(axis=0, keepdims=True)

    diurnal = DIURNAL_TEMPLATE / DIURNAL_TEMPLATE.sum()
    active = np.flatnonzero(diurnal > 0)
    hours_idx = (np.arange(days)[:, None] * 24 + active[None, :]).ravel()
    h_day = np.repeat(np.arange(days), active.size)
    h_frac = np.tile(diurnal[active], days)
    # the far tail of the trips marginal could breach the hourly trip cap
    peak = diurnal.max() * dayfac.max(axis=0)
    trips = np.minimum(trips, params.max_trips_per_hour / peak * (1 - 1e-9))
    scale = population * trips
    # shape (T_active, n, K): hour-major, then community, then POI (sorted)
    w = (h_frac[:, None, None] * dayfac[h_day][:, :, None]
         * (scale[:, None] * pref)[None, :, :])
    T = hours_idx.size
    hour_arr = np.broadcast_to(hours_idx[:, None, None], (T, n, K)).ravel()
    comm_arr = np.broadcast_to(np.arange(n)[None, :, None], (T, n, K)).ravel()
    poi_arr = np.broadcast_to(fav[None, :, :], (T, n, K)).ravel()
    mobility = MobilityTensor.from_entries(days * 24, n, m, hour_arr, comm_arr, poi_arr, w.ravel())

    width = max(4, len(str(n - 1)))
    ids = [f"c{i:0{width}d}" for i in range(n)]
    pids = [f"p{j:0{max(3, len(str(m - 1)))}d}" for j in range(m)]
    return World.build(ids, population, age_fractions_from_older(older, params), income,
                       essential, pids, area, dwell, mobility, params=params)


def realized_correlations(world: World) -> dict[tuple[str, str], float]:
    cols = {
        "age": world.older_adult_fraction,
        "income": world.income,
        "essential": world.essential_fraction,
        "mobility": world.per_capita_mobility(),
    }
    return {pair: float(np.corrcoef(cols[pair[0]], cols[pair[1]])[0, 1]) for pair in PAIR_NAMES}

import numpy as np
import pytest

from bdvax.datamodel import EpidemicParams, MobilityTensor, World
from bdvax.synthworld import default_synth_config, generate_world


def hand_world(population=(100.0, 200.0, 300.0), older=(0.1, 0.3, 0.2), income=(10.0, 20.0, 30.0),
               essential=(0.2, 0.1, 0.3), n_pois=2, days=2, entries=None, params=None,
               ids=None) -> World:
    """Small two-band world; ``entries`` is a list of (hour, community, poi, weight)."""
    params = params or EpidemicParams(ifr_by_age=(0.001, 0.05), age_band_lower=(0, 60),
                                      initial_infected_fraction=0.01)
    n = len(population)
    older = np.asarray(older, dtype=float)
    ages = np.column_stack([1 - older, older])
    hours = days * 24
    if entries is None:
        # everyone visits POI (c mod n_pois) for hours 8..17 of every day
        entries = [(d * 24 + h, c, c % n_pois, 0.2 * population[c])
                   for d in range(days) for h in range(8, 18) for c in range(n)]
    h, c, p, w = zip(*entries) if entries else ((), (), (), ())
    mob = MobilityTensor.from_entries(hours, n, n_pois, h, c, p, w)
    ids = ids or [f"c{i}" for i in range(n)]
    return World.build(ids, population, ages, income, essential,
                       [f"p{j}" for j in range(n_pois)], np.full(n_pois, 50.0),
                       np.full(n_pois, 1.0), mob, params)


def small_world(seed=0, n=40, m=12, days=20, **kw) -> World:
    return generate_world(default_synth_config(seed=seed, n_communities=n, n_pois=m,
                                               horizon_days=days, **kw))


@pytest.fixture
def world3():
    return hand_world()


@pytest.fixture(scope="session")
def synth40():
    return small_world()


# one line per acceptance criterion, shown at the end of the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

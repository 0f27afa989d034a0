import numpy as np
import pytest

from bdvax.calibration import (CalibrationSpec, ParamRange, calibrate, default_spec, nrmse,
                               read_grid, write_envelope)
from bdvax.engine import run
from bdvax.errors import ConfigError, DimensionError, ParseError, UndefinedBaselineError

from conftest import small_world


def test_nrmse_values():
    assert nrmse([3.0, 3.0], [2.0, 2.0]) == 0.5
    assert nrmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    rng = np.random.default_rng(0)
    p, o = rng.random(20), rng.random(20) + 0.1
    assert nrmse(7.5 * p, 7.5 * o) == pytest.approx(nrmse(p, o), rel=1e-13)


def test_nrmse_errors():
    with pytest.raises(DimensionError):
        nrmse([1.0, 2.0], [1.0])
    with pytest.raises(DimensionError):
        nrmse([], [])
    with pytest.raises(UndefinedBaselineError):
        nrmse([1.0, 2.0], [0.0, 0.0])


@pytest.fixture(scope="module")
def observed_world():
    w = small_world(seed=4, n=30, m=10, days=30)
    truth = w.params.with_values(beta_poi=0.09, beta_base=0.03)
    obs = run(w.with_params(truth)).daily_deaths
    return w.with_observed(obs), truth


def grid_spec(**kw):
    return CalibrationSpec((ParamRange("beta_poi", 0.03, 0.12, 4),
                            ParamRange("beta_base", 0.01, 0.04, 4)), **kw)


def test_recovers_on_grid_truth(observed_world):
    w, truth = observed_world
    rep = calibrate(w, "bd", grid_spec())
    assert rep.best_params.beta_poi == pytest.approx(truth.beta_poi, abs=1e-12)
    assert rep.best_params.beta_base == pytest.approx(truth.beta_base, abs=1e-12)
    assert rep.best_nrmse == pytest.approx(0.0, abs=1e-12)


def test_single_point_space(observed_world):
    w, _ = observed_world
    spec = CalibrationSpec((ParamRange("beta_poi", 0.05, 0.05, 1),))
    rep = calibrate(w, "bd", spec)
    assert len(rep.band_members) == 1
    assert rep.band_members[0][0] == {"beta_poi": 0.05}


def test_report_invariants(observed_world):
    w, _ = observed_world
    rep = calibrate(w, "metapop", grid_spec(acceptance_band=2.0))
    errs = [e for _, e in rep.evaluated]
    assert rep.best_nrmse == min(errs)
    assert all(e <= 2.0 * rep.best_nrmse for _, e in rep.band_members)
    assert len(rep.band_members) == sum(e <= 2.0 * rep.best_nrmse for e in errs)
    lo, hi = rep.band_envelope.T
    assert np.all(lo <= rep.best_prediction) and np.all(rep.best_prediction <= hi)


def test_superset_never_worse(observed_world):
    w, _ = observed_world
    w = w.with_observed(w.observed_daily_deaths * 1.3)
    small = CalibrationSpec((ParamRange("beta_poi", 0.03, 0.12, 4),))
    big = CalibrationSpec((ParamRange("beta_poi", 0.03, 0.12, 7),))   # contains the 4-grid
    assert calibrate(w, "bd", big).best_nrmse <= calibrate(w, "bd", small).best_nrmse


def test_random_sampling_is_seeded(observed_world):
    w, _ = observed_world
    spec = CalibrationSpec((ParamRange("beta_poi", 0.03, 0.12, samples=5),), seed=3)
    a, b = calibrate(w, "bd", spec), calibrate(w, "bd", spec)
    assert a.evaluated == b.evaluated
    assert all(0.03 <= p["beta_poi"] <= 0.12 for p, _ in a.evaluated)


def test_threads_do_not_change_report(observed_world):
    w, _ = observed_world
    a = calibrate(w, "bd", grid_spec())
    b = calibrate(w, "bd", grid_spec(threads=4))
    assert a.evaluated == b.evaluated and a.best_params == b.best_params


def test_default_spec_is_ten_cubed(observed_world):
    w, _ = observed_world
    spec = default_spec(w.params)
    assert len(spec.candidates()) == 1000
    assert [r.name for r in spec.search_space] == ["beta_poi", "beta_base", "initial_infected_fraction"]


def test_spec_errors(observed_world):
    w, _ = observed_world
    with pytest.raises(ConfigError):
        ParamRange("beta_poi", 0.2, 0.1, 3)
    with pytest.raises(ConfigError):
        ParamRange("nope", 0.1, 0.2, 3)
    with pytest.raises(ConfigError):
        CalibrationSpec(())
    with pytest.raises(ConfigError):
        CalibrationSpec((ParamRange("beta_poi", 0.1, 0.2, 3),), acceptance_band=0.9)
    with pytest.raises(ConfigError):
        calibrate(w.with_observed(None), "bd", grid_spec())
    with pytest.raises(ConfigError):
        calibrate(w.with_observed(np.ones(w.days + 1)), "bd", grid_spec())


def test_grid_file(tmp_path, observed_world):
    w, _ = observed_world
    f = tmp_path / "grid.csv"
    f.write_text("param,min,max,steps\nbeta_poi,0.03,0.12,4\nbeta_base,0.01,0.04,4\n")
    assert read_grid(f).candidates() == grid_spec().candidates()
    f.write_text("param,min,max,steps\nbeta_poi,0.03,high,4\n")
    with pytest.raises(ParseError, match="grid.csv:2:"):
        read_grid(f)


def test_report_files(tmp_path, observed_world):
    w, _ = observed_world
    rep = calibrate(w, "bd", grid_spec())
    rep.write_csv(tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "beta_base,beta_poi,nrmse,in_band,best"
    assert len(rows) == 17 and sum(r.endswith(",1") for r in rows[1:]) == 1
    write_envelope(rep, tmp_path / "e.csv")
    assert len((tmp_path / "e.csv").read_text().splitlines()) == w.observed_daily_deaths.size + 1

"""Command line entry point: ``bdvax <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 validation error, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import analysis, calibration, engine, experiment, indices, metrics, strategies, synthworld
from .datamodel import load_world, read_plan, save_world, write_plan
from .errors import ConfigError, ParseError, ValidationError

log = logging.getLogger("bdvax")

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3, 4


def _fmt(x) -> str:
    return repr(float(x))


def _out(args, name: str) -> Path:
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    return root / name


def _write(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synthworld(args) -> None:
    overrides = {}
    for f in fields(synthworld.SynthConfig):
        val = getattr(args, f.name, None)
        if val is not None and f.name != "params":
            overrides[f.name] = tuple(val) if isinstance(val, list) else val
    overrides["seed"] = args.seed
    world = synthworld.generate_world(synthworld.default_synth_config(**overrides))
    save_world(world, args.world_out or Path(args.out) / "world")


def _simulation_rows(res: engine.SimulationResult, world):
    daily = [(d, _fmt(v)) for d, v in enumerate(res.daily_deaths)]
    per = [(cid, _fmt(res.per_community_cumulative_deaths[i]),
            _fmt(res.per_community_cumulative_infections[i]))
           for i, cid in enumerate(world.community_ids)]
    return daily, per


def cmd_simulate(args) -> None:
    world = load_world(args.world)
    plan = read_plan(args.plan, world) if args.plan else None
    res = engine.run(world, args.model, plan, args.mode, args.days, args.seed)
    daily, per = _simulation_rows(res, world)
    _write(_out(args, "daily_deaths.csv"), ["day", "deaths"], daily)
    _write(_out(args, "per_community.csv"), ["community_id", "deaths", "infections"], per)
    if res.diagnostics:
        log.warning("%d negative flows were clamped to zero", res.diagnostics)


def cmd_calibrate(args) -> None:
    world = load_world(args.world)
    kw = {"acceptance_band": args.band, "seed": args.seed, "threads": args.threads}
    spec = (calibration.read_grid(args.grid, **kw) if args.grid
            else calibration.default_spec(world.params, **kw))
    report = calibration.calibrate(world, args.model, spec)
    report.write_csv(_out(args, "calibration_report.csv"))
    calibration.write_envelope(report, _out(args, "calibration_envelope.csv"))
    print(f"best nrmse {report.best_nrmse:.6g} with "
          + ", ".join(f"{r.name}={getattr(report.best_params, r.name):.6g}" for r in spec.search_space))


def _weights_arg(text):
    if text is None:
        return None
    p = Path(text)
    if p.exists():
        return analysis.read_weights(p)
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise ConfigError(f"--weights: {text!r} is neither a file nor a comma-separated list") from None


def cmd_plan(args) -> None:
    world = load_world(args.world)
    scenario = strategies.AcceptanceScenario.parse(args.scenario)
    plan = strategies.make_plan(world, args.strategy, args.budget, scenario, args.day, args.seed,
                                args.mode, weights=_weights_arg(args.weights))
    write_plan(plan, world, _out(args, "plan.csv"))
    if plan.has_shortfall:
        log.warning("acceptance caps leave %.6g of the budget unspent", plan.shortfall)


def _read_per_community(path, world) -> engine.SimulationResult:
    index = world.community_index()
    deaths = np.full(world.n_communities, np.nan)
    for line, header, row in _iter(path, ("community_id", "deaths")):
        rec = dict(zip(header, row))
        cid = rec["community_id"].strip()
        if cid not in index:
            raise ParseError(path, line, f"unknown community id {cid!r}")
        try:
            deaths[index[cid]] = float(rec["deaths"])
        except ValueError:
            raise ParseError(path, line, "deaths is not a number") from None
    if np.isnan(deaths).any():
        raise ValidationError(f"{path}: not every community has a row")
    empty = np.zeros(0)
    return engine.SimulationResult(empty, deaths, np.zeros_like(deaths), None, empty, empty, empty)


def _iter(path, cols):
    from .datamodel import iter_csv
    return iter_csv(path, cols)


def cmd_evaluate(args) -> None:
    world = load_world(args.world)
    vac = _read_per_community(args.vaccinated, world)
    ref = _read_per_community(args.reference, world)
    rep = metrics.evaluate(vac, ref, world, args.groups)
    _write(_out(args, "outcome_report.csv"), ["metric", "value"],
           [(k, _fmt(v)) for k, v in rep.as_dict().items()])


def cmd_indices(args) -> None:
    world = load_world(args.world)
    table = indices.build_index_table(world, args.days, method=args.method)
    table.write_csv(_out(args, "index_table.csv"))


def cmd_regress(args) -> None:
    world = load_world(args.world)
    study = analysis.index_ablation_study(world, args.instances, args.coverage, args.seed,
                                          args.threads)
    study.write_csv(_out(args, "regression_report.csv"))


def cmd_learn_weights(args) -> None:
    world = load_world(args.world)
    scenario = strategies.AcceptanceScenario.parse(args.scenario)
    search = analysis.learn_weights(world, args.budget, scenario, n_candidates=args.candidates,
                                    seed=args.seed, ablation=args.ablation, threads=args.threads,
                                    day=args.day)
    analysis.write_weights(search.weights, _out(args, "weights.csv"))
    print(f"overall performance {search.performance:.6g}")


def cmd_sweep(args) -> None:
    cfg = (experiment.ExperimentConfig.from_file(args.config) if args.config
           else experiment.ExperimentConfig())
    over = {"out": args.out if args.out_given else None,
            "threads": args.threads if args.threads_given else None}
    if args.seeds:
        over["seeds"] = tuple(args.seeds)
    elif args.seed_given:
        over["seeds"] = (args.seed,)
    if args.world:
        over["world"] = args.world
    cfg = experiment.with_overrides(cfg, **over)
    experiment.run_experiment(cfg)


# ---------------------------------------------------------------------------
# parser


def _add_world(p):
    p.add_argument("--world", required=True, help="world bundle directory")


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS so a flag given before the subcommand is not reset by the subparser
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="bdvax", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthworld", parents=[common], help="generate a synthetic world bundle")
    defaults = synthworld.SynthConfig()
    for f in fields(synthworld.SynthConfig):
        if f.name in ("params", "seed"):
            continue
        dv = getattr(defaults, f.name)
        flag = "--" + f.name.replace("_", "-")
        if isinstance(dv, tuple):
            p.add_argument(flag, dest=f.name, type=float, nargs=len(dv), default=None)
        else:
            p.add_argument(flag, dest=f.name, type=type(dv), default=None)
    p.add_argument("--world-out", default=None, help="bundle directory (default OUT/world)")
    p.set_defaults(func=cmd_synthworld)

    p = sub.add_parser("simulate", parents=[common], help="run the epidemic model")
    _add_world(p)
    p.add_argument("--model", default="bd", choices=[m.value for m in engine.ModelKind])
    p.add_argument("--plan", default=None, help="plan CSV (community_id,fraction,day)")
    p.add_argument("--mode", default=engine.DETERMINISTIC, choices=engine.MODES)
    p.add_argument("--days", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common], help="grid-search epidemic parameters")
    _add_world(p)
    p.add_argument("--model", default="bd", choices=[m.value for m in engine.ModelKind])
    p.add_argument("--grid", default=None, help="CSV with param,min,max,steps")
    p.add_argument("--band", type=float, default=1.5)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("plan", parents=[common], help="build a vaccine plan")
    _add_world(p)
    p.add_argument("--strategy", required=True, choices=[k.value for k in strategies.StrategyKind])
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--scenario", default="none")
    p.add_argument("--day", type=int, default=strategies.DEFAULT_DAY)
    p.add_argument("--mode", default=engine.DETERMINISTIC, choices=engine.MODES)
    p.add_argument("--weights", default=None, help="weights CSV or comma-separated list")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("evaluate", parents=[common], help="compare two per-community results")
    _add_world(p)
    p.add_argument("--vaccinated", required=True, help="per_community.csv of the vaccinated run")
    p.add_argument("--reference", required=True, help="per_community.csv of the reference run")
    p.add_argument("--groups", type=int, default=5)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("indices", parents=[common], help="community risk and societal harm")
    _add_world(p)
    p.add_argument("--days", type=int, default=None)
    p.add_argument("--method", default=indices.ANALYTIC,
                   choices=(indices.ANALYTIC, indices.COUNTERFACTUAL))
    p.set_defaults(func=cmd_indices)

    p = sub.add_parser("regress", parents=[common], help="index ablation regressions")
    _add_world(p)
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--coverage", type=float, default=0.02)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("learn-weights", parents=[common], help="learn comprehensive weights")
    _add_world(p)
    p.add_argument("--budget", type=float, default=0.1)
    p.add_argument("--scenario", default="none")
    p.add_argument("--candidates", type=int, default=500)
    p.add_argument("--day", type=int, default=strategies.DEFAULT_DAY)
    p.add_argument("--ablation", action="store_true", help="search demographic weights only")
    p.set_defaults(func=cmd_learn_weights)

    p = sub.add_parser("sweep", parents=[common], help="run an experiment grid")
    p.add_argument("--config", default=None, help="key = value experiment file")
    p.add_argument("--world", default=None, help="use a bundle instead of synthetic worlds")
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = hasattr(args, "seed")
    args.out_given = hasattr(args, "out")
    args.threads_given = hasattr(args, "threads")
    args.seed = getattr(args, "seed", 0)
    args.threads = max(1, getattr(args, "threads", 1))
    args.out = getattr(args, "out", ".")
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ValidationError as exc:  # includes parse errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

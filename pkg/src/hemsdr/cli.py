"""Command-line entry point: ``hemsdr <command> [options]``.

A data directory holds ``consumption.csv``, ``irradiation.csv`` and
``price.csv``; a models directory collects ``forecasters/``, ``imitation/``
and ``maddpg/`` as the training commands produce them.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from hemsdr import data, forecasting, imitation, maddpg, reporting, simulation
from hemsdr.config import Config, load_config
from hemsdr.errors import (
    ConfigError, DataError, DomainError, InfeasibleError, MetricError, SolverError, TrainingError,
)
from hemsdr.forecast_milp import ForecastMilpStrategy, save_plan_csv

log = logging.getLogger("hemsdr")

EXIT_OK, EXIT_DATA, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
SERIES = {"consumption": "consumption.csv", "irradiation": "irradiation.csv",
          "price": "price.csv"}
FORECASTERS = {"ec1": ("consumption", 1), "ec24": ("consumption", 24),
               "ghi24": ("irradiation", 24), "price24": ("price", 24)}


def _load_series(data_dir):
    root = Path(data_dir)
    return {k: data.load_csv(root / f, k) for k, f in SERIES.items()}


def _split_all(series, window):
    out = {k: data.split(s, 1, window) for k, s in series.items()}
    train = {k: v[0] for k, v in out.items()}
    test = {k: v[1] for k, v in out.items()}
    return train, test


def _days(parts, params):
    return data.to_days(parts["consumption"], parts["irradiation"], parts["price"], params)


def _history(train):
    return simulation.History(train["consumption"].values, train["irradiation"].values,
                              train["price"].values)


def _models(args):
    return Path(args.models or args.out)


def cmd_synth_data(args, cfg: Config):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    months = args.months or cfg.months
    home = args.home or cfg.home
    seed = args.seed
    series = {
        "consumption": data.synth_home(home, months, seed=seed),
        "irradiation": data.synth_irradiation(months, seed=seed + 1),
        "price": data.synth_price(months, seed=seed + 2),
    }
    for k, s in series.items():
        data.save_csv(s, out / SERIES[k])
    print(f"wrote {months} months of {home} home data to {out}")


def cmd_train_forecasters(args, cfg: Config):
    fc = cfg.forecast
    train, _ = _split_all(_load_series(args.data), fc.window)
    root = Path(args.out) / "forecasters"
    root.mkdir(parents=True, exist_ok=True)
    wanted = args.only.split(",") if args.only else list(FORECASTERS)
    for name in wanted:
        if name not in FORECASTERS:
            raise DataError(f"unknown forecaster {name!r}; choose from {sorted(FORECASTERS)}")
        kind, horizon = FORECASTERS[name]
        f = forecasting.fit(train[kind], horizon=horizon, seed=args.seed, target=kind,
                            window=fc.window, hidden=fc.hidden, layers=fc.layers,
                            epochs=fc.epochs, batch=fc.batch, lr=fc.lr, stride=fc.stride)
        f.save(root / f"{name}.net")
        print(f"{name}: saved {root / (name + '.net')}")


def cmd_label_dataset(args, cfg: Config):
    train, _ = _split_all(_load_series(args.data), cfg.forecast.window)
    ds = imitation.generate_dataset(_days(train, cfg.system), cfg.system)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    imitation.save_dataset(ds, out / "dataset.csv")
    print(f"{len(ds)} samples written to {out / 'dataset.csv'}")


def _ec1(models):
    path = Path(models) / "forecasters" / "ec1.net"
    if path.exists():
        return forecasting.Forecaster.load(path)
    log.warning("%s missing; using the seasonal-naive forecaster", path)
    return forecasting.SeasonalNaive()


def cmd_train_imitation(args, cfg: Config):
    ds = imitation.load_dataset(args.dataset)
    ic = cfg.imitation
    ctl = imitation.train_controller(ds, _ec1(_models(args)), cfg.system, seed=args.seed,
                                     hidden=ic.hidden, epochs=ic.epochs, batch=ic.batch, lr=ic.lr)
    out = Path(args.out) / "imitation"
    imitation.save_controller(ctl, out)
    print(f"controller saved to {out}")


def cmd_train_maddpg(args, cfg: Config):
    train, _ = _split_all(_load_series(args.data), cfg.forecast.window)
    mc = cfg.maddpg
    if args.episodes:
        mc = maddpg.MaddpgConfig(**{**mc.__dict__, "episodes": args.episodes})
    agents = maddpg.train_agents(_days(train, cfg.system), mc, cfg.system, seed=args.seed,
                                 log_every=max(mc.episodes // 20, 1))
    out = Path(args.out) / "maddpg"
    maddpg.save_agents(agents, out, forecaster=_ec1(_models(args)))
    print(f"agents saved to {out}; last-100 mean return {agents.returns[-100:].mean():.4f}")


def _strategies(models, names):
    models = Path(models)
    out = []
    for name in names:
        if name == "idle":
            out.append(simulation.IdleStrategy())
        elif name == "grid-only":
            out.append(simulation.GridOnlyStrategy())
        elif name == "imitation":
            out.append(imitation.ImitationStrategy(imitation.load_controller(models / "imitation")))
        elif name == "maddpg":
            agents, f = maddpg.load_agents(models / "maddpg")
            out.append(maddpg.MaddpgStrategy(agents, f or _ec1(models)))
        elif name == "forecast-milp":
            fdir = models / "forecasters"
            fs = [forecasting.Forecaster.load(fdir / f"{n}.net") for n in ("ec24", "ghi24", "price24")]
            out.append(ForecastMilpStrategy(*fs))
        elif name != "milp":
            raise DataError(f"unknown strategy {name!r}")
    return out


def _available(models):
    models = Path(models)
    names = ["idle"]
    if (models / "imitation" / "manifest.json").exists():
        names.append("imitation")
    if (models / "maddpg" / "manifest.json").exists():
        names.append("maddpg")
    if all((models / "forecasters" / f"{n}.net").exists() for n in ("ec24", "ghi24", "price24")):
        names.append("forecast-milp")
    return names


def cmd_run_day(args, cfg: Config):
    train, test = _split_all(_load_series(args.data), cfg.forecast.window)
    days = _days(test, cfg.system)
    if not 1 <= args.day <= len(days):
        raise DataError(f"day must lie in 1..{len(days)}")
    history = _history(train)
    for d in days[:args.day - 1]:
        history = history.extend(d)
    day = days[args.day - 1]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.strategy == "milp":
        strat = simulation.milp_replay(simulation.milp_reference(day, cfg.system))
    else:
        strat = _strategies(args.models or args.out, [args.strategy])[0]
    res = simulation.simulate_day(strat, day, history, cfg.system)
    simulation.save_result_csv(res, day, out / f"day{args.day}_{args.strategy}.csv", cfg.system)
    if isinstance(strat, ForecastMilpStrategy):
        save_plan_csv(strat.plan, out / f"day{args.day}_plan.csv")
    print(f"day {args.day} {args.strategy}: cost {res.cost:.4f} baseline {res.baseline:.4f} "
          f"waste {res.res_waste:.3f} kWh terminal residual {res.terminal_residual:.3f} kWh")


def cmd_evaluate_month(args, cfg: Config):
    train, test = _split_all(_load_series(args.data), cfg.forecast.window)
    days = _days(test, cfg.system)
    models = args.models or args.out
    names = args.strategies.split(",") if args.strategies else _available(models)
    rep = reporting.evaluate_month(_strategies(models, names), days, _history(train), cfg.system)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(rep.to_json(), encoding="utf-8")
    reporting.emit_report(rep, out)
    for n in rep.strategies:
        print(f"{n:>14}: effectiveness {rep.effectiveness(n):7.2f}%  waste {rep.waste[n]:8.3f} kWh"
              f"  slot time {rep.slot_time[n] * 1e3:8.3f} ms")


def cmd_report(args, cfg: Config):
    text = Path(args.input).read_text(encoding="utf-8")
    rep = reporting.EvaluationReport.from_json(text)
    paths = reporting.emit_report(rep, args.out)
    print("wrote " + ", ".join(sorted(paths)))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hemsdr", description="Home energy demand response toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", parents=[common], help="generate a synthetic home")
    s.add_argument("--home", choices=sorted(data.HOME_CLASSES))
    s.add_argument("--months", type=int)
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("train-forecasters", parents=[common], help="fit the GRU forecasters")
    s.add_argument("--data", required=True)
    s.add_argument("--only", help="comma-separated subset of ec1,ec24,ghi24,price24")
    s.set_defaults(func=cmd_train_forecasters)

    s = sub.add_parser("label-dataset", parents=[common], help="label training days with the MILP")
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_label_dataset)

    s = sub.add_parser("train-imitation", parents=[common], help="train the imitation heads")
    s.add_argument("--dataset", required=True)
    s.add_argument("--models", help="models directory holding forecasters/ (default: --out)")
    s.set_defaults(func=cmd_train_imitation)

    s = sub.add_parser("train-maddpg", parents=[common], help="train the two MADDPG agents")
    s.add_argument("--data", required=True)
    s.add_argument("--models")
    s.add_argument("--episodes", type=int, help="override the configured episode count")
    s.set_defaults(func=cmd_train_maddpg)

    s = sub.add_parser("run-day", parents=[common], help="simulate one test day")
    s.add_argument("--data", required=True)
    s.add_argument("--models")
    s.add_argument("--day", type=int, default=1, help="1-based test-day index")
    s.add_argument("--strategy", default="idle",
                   choices=["idle", "grid-only", "milp", "imitation", "maddpg", "forecast-milp"])
    s.set_defaults(func=cmd_run_day)

    s = sub.add_parser("evaluate-month", parents=[common], help="compare strategies on the test month")
    s.add_argument("--data", required=True)
    s.add_argument("--models")
    s.add_argument("--strategies", help="comma-separated list (default: all available)")
    s.set_defaults(func=cmd_evaluate_month)

    s = sub.add_parser("report", parents=[common], help="render CSV/SVG from a saved report.json")
    s.add_argument("--input", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else Config()
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        args.func(args, cfg)
    except (DataError, DomainError, ConfigError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, TrainingError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

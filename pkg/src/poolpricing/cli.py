"""Command line entry point: ``poolpricing {graph,price,match,run,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from poolpricing.demand import write_requests
from poolpricing.errors import ConfigError, DataError, DomainError
from poolpricing.experiment.config import ScenarioConfig, Strategy, load_config
from poolpricing.experiment.pipeline import PipelineStageError, build_stage, resolve_requests, run_pipeline
from poolpricing.experiment.reports import emit_reports, load_kpis
from poolpricing.matching import write_offer_csv
from poolpricing.pricing import write_priced_csv
from poolpricing.shareability import write_rides_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("poolpricing")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario file (INI); defaults apply when omitted")
    common.add_argument("--requests", type=Path, help="request CSV; overrides the config's demand source")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--strategy", action="append", metavar="NAME",
                        help="personalised, flat:<x> or private; repeatable, replaces the config list")
    common.add_argument("--seed", type=int, help="demand generator seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for pricing (default: 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="poolpricing",
                                description="Personalised ride-pooling discounts and offer selection.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("graph", parents=[common], help="build the shareability graph (rides.csv)")
    sub.add_parser("price", parents=[common], help="price every ride per strategy (<strategy>/priced.csv)")
    sub.add_parser("match", parents=[common], help="price and select offers (<strategy>/offer.csv)")
    sub.add_parser("run", parents=[common], help="full study: offers plus every report dataset")
    sub.add_parser("report", parents=[common], help="print the KPI table of a finished run in --out")
    return p


def _scenario(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    strategies = None
    if args.strategy is not None:
        strategies = tuple(Strategy.parse(s) for s in args.strategy)
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg.with_overrides(strategies=strategies, seed=args.seed, requests=args.requests)


def _print_table(kpis: dict, stream=None) -> None:
    stream = stream or sys.stdout
    print(f"{'strategy':<14}{'avg Gamma':>11}{'total psi':>12}{'rides':>7}{'mean deg':>10}{'private':>9}",
          file=stream)
    for name, k in kpis.items():
        print(f"{name:<14}{k['average_expected_profitability']:>11.4f}{k['total_expected_distance']:>12.2f}"
              f"{k['rides_selected']:>7d}{k['mean_ride_degree']:>10.3f}{k['private_travellers']:>9d}",
              file=stream)


def _execute(args) -> None:
    if args.command == "report":
        path = args.out / "kpis.json"
        try:
            kpis = load_kpis(path)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot read {path}: {exc}") from None
        _print_table(kpis)
        return

    cfg = _scenario(args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "graph":
        requests = resolve_requests(cfg)
        graph, _ = build_stage(cfg, requests)
        write_requests(requests, out / "requests.csv")
        write_rides_csv(graph, out / "rides.csv")
        print(f"{len(graph.rides)} rides for {len(graph.travellers)} travellers -> {out / 'rides.csv'}")
        return

    result = run_pipeline(cfg, threads=args.threads, match=args.command != "price")
    if args.command == "run":
        emit_reports(result, out)
        _print_table({r.name: r.kpis() for r in result.reports})
        return
    write_requests(result.requests, out / "requests.csv")
    write_rides_csv(result.graph, out / "rides.csv")
    for rep in result.reports:
        sub = out / rep.strategy.slug
        sub.mkdir(exist_ok=True)
        write_priced_csv([rep.priced[k] for k in sorted(rep.priced)], sub / "priced.csv")
        if args.command == "match":
            write_offer_csv(rep.offer, result.graph, rep.priced, sub / "offer.csv")
    if args.command == "match":
        _print_table({r.name: r.kpis() for r in result.reports})


def _exit_code(exc: BaseException) -> int | None:
    if isinstance(exc, PipelineStageError):
        exc = exc.original
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, LookupError, FileNotFoundError)):
        return EXIT_DATA
    return None


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _execute(args)
    except (ConfigError, DataError, LookupError, FileNotFoundError, PipelineStageError, DomainError) as exc:
        code = _exit_code(exc)
        if code is None:
            if isinstance(exc, DomainError):
                code = EXIT_CONFIG
            else:
                raise
        print(f"poolpricing: error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

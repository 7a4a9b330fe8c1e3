"""Command line entry point for the simulator."""
from __future__ import annotations

import argparse
import csv
import itertools
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, SimConfig, coerce_value, preset, read_config_dict
from .errors import ConfigError, SimulationError
from .sim import run

log = logging.getLogger("robgossip")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

SWEEP_COLUMNS = ("run", "seed", "final_f1_mean", "mean_f_in", "min_hssr", "max_byz_in_view",
                 "rounds_over_threshold", "duration_s")


def _parse_assignment(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError("--set", f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


def build_config(args) -> SimConfig:
    """Layering: defaults < preset < config file < ``--set`` < ``--seed``/``--out``."""
    data: dict = {}
    if args.preset:
        data.update(preset(args.preset))
    if args.config:
        data.update(read_config_dict(args.config))
    for item in args.set or []:
        key, value = _parse_assignment(item)
        data[key] = coerce_value(key, value)
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        data["out"] = str(args.out)
    try:
        cfg = SimConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None
    return cfg.validate()


def _print_rows(rows, stream) -> None:
    from .metrics import CSV_COLUMNS

    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_row())


def cmd_run(args) -> int:
    cfg = build_config(args)
    art = run(cfg)
    if cfg.out is None:
        _print_rows(art.rows, sys.stdout)
    else:
        print(f"wrote {Path(cfg.out) / 'metrics.csv'} ({len(art.rows)} rounds, {art.duration_s:.1f}s)")
        if args.plot:
            from .plotting import report

            for p in report([cfg.out]):
                print(f"wrote {p}")
    return EXIT_OK


def _grid(items) -> list[tuple[str, list]]:
    grid = []
    for item in items or []:
        key, values = _parse_assignment(item)
        grid.append((key, [coerce_value(key, v) for v in values.split(",") if v != ""]))
    return grid


def _label(assignment: dict) -> str:
    if not assignment:
        return "base"
    return "_".join(f"{k}={v}" for k, v in assignment.items()).replace("/", "-")


def cmd_sweep(args) -> int:
    base = build_config(args)
    out = Path(args.out)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out}")
    grid = _grid(args.grid)
    keys = [k for k, _ in grid]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [base.seed]
    combos = list(itertools.product(*[vals for _, vals in grid])) or [()]
    summary_path = out / "sweep.csv"
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys + list(SWEEP_COLUMNS))
        for combo in combos:
            assignment = dict(zip(keys, combo))
            for seed in seeds:
                name = f"{_label(assignment)}_seed={seed}"
                run_dir = out / name
                run_dir.mkdir(exist_ok=True)
                cfg = base.replace(**assignment, seed=seed, out=str(run_dir)).validate()
                art = run(cfg)
                rows = art.rows
                w.writerow([*combo, name, seed,
                            repr(float(np.mean(art.final_f1))) if art.final_f1 else "",
                            repr(float(np.mean([r.f_in_out for r in rows]))),
                            repr(min(r.hssr for r in rows)),
                            max(r.max_byz_in_view for r in rows),
                            sum(r.views_over_threshold > 0 for r in rows),
                            f"{art.duration_s:.3f}"])
                fh.flush()
                print(f"{name}: {len(rows)} rounds in {art.duration_s:.1f}s")
    print(f"wrote {summary_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .plotting import report

    for p in report(args.run_dirs, args.out):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in sorted(PRESETS):
        print(name)
    return EXIT_OK


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with configuration keys")
    p.add_argument("--preset", choices=sorted(PRESETS), metavar="NAME", help="named scenario (see `presets`)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key (repeatable)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robgossip", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    _add_config_args(p)
    p.add_argument("--out", type=Path, help="existing directory for metrics.csv and summary.json")
    p.add_argument("--plot", action="store_true", help="also render PNG figures into --out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a grid of configurations")
    _add_config_args(p)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="values to sweep (repeatable)")
    p.add_argument("--seeds", help="comma-separated seeds, overrides --seed")
    p.add_argument("--out", type=Path, required=True, help="existing directory; one subdirectory per run")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render figures from run directories")
    p.add_argument("run_dirs", nargs="+", type=Path)
    p.add_argument("--out", type=Path, help="figure directory (default: the first run directory)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("presets", help="list named scenarios")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``asindy {collect,identify,evaluate,sweep}``.

Exit codes: 0 ok, 2 configuration/domain error, 3 data or model-file error,
4 solver error, 5 simulation divergence, 1 anything else in the package.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import AsindyError, ConfigError, DataError
from .harness import collect, evaluate, identify, results_table, sweep
from .sindy import load_model

log = logging.getLogger("asindy")

TRAJECTORIES = ("circle", "lemniscate", "spiral")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment configuration file (INI)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seeds", help="comma-separated seed list (overrides --runs)")
    p.add_argument("--runs", type=int, help="number of runs, seeds base_seed .. base_seed+runs-1")
    p.add_argument("--controller", choices=("asindy", "pid"))
    p.add_argument("--model", help="SINDy model file (output path for identify)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one configuration value; repeatable")
    p.add_argument("--quiet", action="store_true", help="only print warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asindy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="data-collection runs with the stock loop")
    _common(p)

    p = sub.add_parser("identify", help="fit the residual-force model from run logs")
    _common(p)
    p.add_argument("logs", nargs="+", help="RunLog CSV files or directories containing them")

    p = sub.add_parser("evaluate", help="compare asindy and pid on the same seeds")
    _common(p)
    p.add_argument("--trajectory", help=f"comma-separated subset of {','.join(TRAJECTORIES)}, or 'all'")

    p = sub.add_parser("sweep", help="evaluate every cell of a parameter grid")
    _common(p)
    p.add_argument("--grid", action="append", default=[], metavar="SECTION.KEY=V1,V2",
                   help="grid axis; repeatable")
    return parser


def _split_assignment(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or "." not in key:
        raise ConfigError(f"expected SECTION.KEY=VALUE, got {text!r}")
    return key.strip(), value.strip()


def _overrides(args, model_is_input: bool) -> dict:
    ov = dict(_split_assignment(s) for s in args.set)
    if args.seeds:
        seeds = [s.strip() for s in args.seeds.split(",") if s.strip()]
        if not all(s.lstrip("-").isdigit() for s in seeds):
            raise ConfigError(f"--seeds must be integers, got {args.seeds!r}")
        ov["experiment.seeds"] = ", ".join(seeds)
        ov["experiment.runs"] = str(len(seeds))
    elif args.runs is not None:
        ov["experiment.runs"] = str(args.runs)
    if args.controller:
        ov["experiment.controller"] = args.controller
    if model_is_input and args.model:
        ov["experiment.model_path"] = str(Path(args.model).resolve())
    return ov


def _log_files(items) -> list[Path]:
    files = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            found = sorted(p.rglob("*.csv"))
            files += [f for f in found if f.name.startswith("run_")]
        elif p.exists():
            files.append(p)
        else:
            raise DataError(f"log file {p} does not exist")
    if not files:
        raise DataError("no run logs found")
    return files


def _parse_grid(items) -> dict:
    grid = {}
    for item in items:
        key, values = _split_assignment(item)
        grid[key] = [v.strip() for v in values.split(",") if v.strip()]
        if not grid[key]:
            raise ConfigError(f"grid axis {key} has no values")
    if not grid:
        raise ConfigError("sweep needs at least one --grid axis")
    return grid


def run(args, echo) -> int:
    cmd = args.command
    cfg = load_config(args.config, _overrides(args, model_is_input=cmd != "identify"))
    out = Path(args.out or f"asindy_{cmd}")

    if cmd == "collect":
        paths = collect(cfg, out)
        echo(f"wrote {len(paths)} run log(s) to {out}")
    elif cmd == "identify":
        model_path = Path(args.model) if args.model else out / "model.txt"
        model_path.parent.mkdir(parents=True, exist_ok=True)
        identify(_log_files(args.logs), cfg, model_path, echo=echo)
        echo(f"model written to {model_path}")
    elif cmd == "evaluate":
        if not cfg.model_path:
            raise ConfigError("evaluate needs a SINDy model (--model or experiment.model_path)")
        model = load_model(cfg.resolve(cfg.model_path))
        kinds = [cfg.trajectory.kind]
        if args.trajectory:
            kinds = list(TRAJECTORIES) if args.trajectory == "all" else args.trajectory.split(",")
        for kind in kinds:
            kcfg = load_config(args.config, {**_overrides(args, True), "trajectory.kind": kind})
            ev = evaluate(kcfg, out / kind if len(kinds) > 1 else out, model)
            echo(results_table(ev, kind).rstrip("\n"))
    elif cmd == "sweep":
        model = load_model(cfg.resolve(cfg.model_path)) if cfg.model_path else None
        rows = sweep(cfg, _parse_grid(args.grid), out, model)
        failed = sum(1 for r in rows if r["status"] != "ok")
        echo(f"sweep: {len({r['cell'] for r in rows})} cell(s), {failed} failed; results in {out / 'sweep.csv'}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    echo = (lambda *a: None) if args.quiet else print
    try:
        return run(args, echo)
    except AsindyError as exc:
        print(f"asindy: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"asindy: DataError: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())

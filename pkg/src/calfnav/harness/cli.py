"""Command-line entry point: ``calfnav {run,summarize,compare,trajectory}``.

Exit status is 0 on success, 1 for a bad configuration or bad arguments and
2 for file-system errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io as tables
from .config import PRESET_CONFIGS, ConfigError, load_config, parse_seeds
from .runner import run_seed, run_experiment
from .stats import NoDataError, summarize

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True,
                   help=f"JSON config file or a named preset ({', '.join(sorted(PRESET_CONFIGS))})")
    p.add_argument("--seeds", help="seed list such as 1-20 or 1,4,9")
    p.add_argument("--episodes", type=int, help="episodes per seed")
    p.add_argument("--agent", choices=("calf", "sarsa_m", "nominal", "mpc"))
    p.add_argument("--preset", choices=("preset-A", "preset-B"), help="scenario preset")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="calfnav", description="CALF navigation experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute a run configuration")
    _add_run_flags(run)
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")

    summ = sub.add_parser("summarize", help="recompute aggregates from a raw CSV")
    summ.add_argument("raw", help="raw per-episode CSV")
    summ.add_argument("--out", help="write the summary here instead of stdout")

    comp = sub.add_parser("compare", help="tabulate several summaries")
    comp.add_argument("summaries", nargs="+", help="summary CSVs or run directories")

    traj = sub.add_parser("trajectory", help="export the best-episode path of one seed")
    _add_run_flags(traj)
    traj.add_argument("--seed", type=int, help="seed to run (default: first seed of the config)")
    traj.add_argument("--out", help="write the trajectory here instead of stdout")
    return parser


def _config(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(
        seeds=parse_seeds(args.seeds) if args.seeds else None,
        episodes=args.episodes,
        agent=args.agent,
        preset=args.preset,
    )


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        tables.write_text(Path(out), text)


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    result = run_experiment(cfg, args.out, workers=args.workers)
    last = result.summary[-1]
    print(f"{len(result.raw)} episodes, success rate {result.success_rate:.3f}, "
          f"last-episode top-25% median cost {last.median_top25_cost:.6g}; wrote {args.out}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    rows = tables.read_raw(args.raw)
    _emit(tables.summary_csv(summarize(rows)), args.out)
    return EXIT_OK


def _summary_path(arg: str) -> Path:
    p = Path(arg)
    return p / "summary.csv" if p.is_dir() else p


def cmd_compare(args) -> int:
    header = f"{'run':<32} {'episodes':>8} {'first':>12} {'last':>12} {'best':>12} {'success':>8}"
    lines = [header]
    for arg in args.summaries:
        path = _summary_path(arg)
        rows = tables.read_summary(path)
        if not rows:
            raise NoDataError(f"{path}: no data")
        label = path.parent.name if path.name == "summary.csv" else path.stem
        med = [r.median_top25_cost for r in rows]
        success = sum(r.success_rate for r in rows) / len(rows)
        lines.append(f"{label:<32} {len(rows):>8} {med[0]:>12.6g} {med[-1]:>12.6g} {min(med):>12.6g} {success:>8.3f}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_trajectory(args) -> int:
    cfg = _config(args)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    if seed < 0:
        raise ConfigError("--seed must be non-negative")
    _emit(run_seed(cfg, seed).best_trajectory_csv, args.out)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "summarize": cmd_summarize, "compare": cmd_compare, "trajectory": cmd_trajectory}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"calfnav: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (tables.TableFormatError, NoDataError) as exc:
        print(f"calfnav: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        where = f" {exc.filename}" if exc.filename else ""
        print(f"calfnav: I/O error:{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

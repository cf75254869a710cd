"""Command-line benchmark runner.

Exit codes: 0 on success, 1 for configuration problems, 2 when at least one
requested method failed.  Set BENCH_THREADS to cap the numeric kernels'
thread pools (applied before numpy is imported, so it must be decided at
process start).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_cap() -> None:
    cap = os.environ.get("BENCH_THREADS")
    if not cap:
        return
    for var in _THREAD_ENV_VARS:
        os.environ.setdefault(var, cap)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Run approximate-Newton benchmark experiments and emit plot-ready tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every method in a config, one trace CSV each")
    run.add_argument("config", help="flat key=value experiment config")
    run.add_argument("--output-dir", help="override the config's output_dir")

    plot = sub.add_parser("plot", help="align trace CSVs into one plot-ready table")
    plot.add_argument("mode", choices=["loss_vs_time", "loss_vs_iter", "hessian_err"])
    plot.add_argument("csv", nargs="+", help="trace CSVs produced by `bench run`")
    plot.add_argument("-o", "--output", required=True, help="output table path")
    plot.add_argument(
        "--suboptimality",
        action="store_true",
        help="subtract the best loss seen across all traces",
    )

    scale = sub.add_parser("scale", help="per-iteration timing over a list of dimensions")
    scale.add_argument("config", help="config supplying span.l / span.m / span.q")
    scale.add_argument("--dims", required=True, help="comma-separated dimensions, e.g. 100,400,1600")
    scale.add_argument("-o", "--output", default="scaling.csv", help="output table path")
    scale.add_argument("--steps", type=int, default=20, help="timed steps per dimension")
    return parser


def main(argv: list[str] | None = None) -> int:
    _apply_thread_cap()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)

    # Imported lazily so the thread cap above lands before numpy starts.
    from pathlib import Path

    from . import bench
    from .errors import ConfigError, IncompatibleTraces, SpanOptError

    try:
        if args.command == "run":
            cfg = bench.load_experiment_config(args.config)
            if args.output_dir:
                cfg.output_dir = Path(args.output_dir)
            result = bench.run_experiment(cfg)
            for method in result.methods:
                print(f"{method.method}: {method.status}")
            print(f"traces written to {result.output_dir}")
            return 0 if result.all_ok else 2

        if args.command == "plot":
            out = bench.emit_plot_data(args.csv, args.mode, args.output, args.suboptimality)
            print(f"wrote {out}")
            return 0

        if args.command == "scale":
            values = bench.parse_config_text(Path(args.config).read_text())
            try:
                dims = [int(d) for d in args.dims.split(",") if d.strip()]
            except ValueError:
                raise ConfigError(f"--dims: expected integers, got {args.dims!r}") from None
            if not dims:
                raise ConfigError("--dims list is empty")
            rows = bench.per_iteration_scaling(
                dims,
                l=int(values.get("span.l", "16")),
                m=int(values.get("span.m", "10")),
                q=int(values.get("span.q", "1")),
                steps=args.steps,
            )
            bench.write_scaling_csv(rows, args.output)
            for row in rows:
                ns = "n/a" if row.newsamp_step_s is None else f"{row.newsamp_step_s:.6f}s"
                print(f"d={row.d}: span {row.span_step_s:.6f}s/step, dense baseline {ns}")
            print(f"wrote {args.output}")
            return 0
    except (ConfigError, IncompatibleTraces, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SpanOptError as exc:
        print(f"method failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

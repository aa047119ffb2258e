"""Command line front end.

Subcommands:
  run      simulate one configuration, print one CSV row
  sweep    cartesian parameter sweep with repetitions and mean rows
  model    closed-form overhead and speedup curve over cluster counts
  compare  simulated against predicted speedup, one row per k

Exit codes: 0 success, 1 configuration problem, 2 violated runtime
invariant, 3 nothing measurable (every cell had missed applications).
"""

import argparse
import sys
from dataclasses import replace

from .analytic import cluster_counts, model_curve
from .experiments import (ConfigError, SimConfig, any_valid,
                          apply_overrides, compare_rows, load_config,
                          parse_axis, render_apps_csv, render_compare_csv,
                          render_csv, render_model_csv, render_nodes_csv,
                          run_experiment, sweep)
from .kernel import SimulationError

TRACE_HEADER = "tick,mtype,src,dst,prio,broadcast,words"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; here those are config errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="manycoresim",
                     description="clustered many-core management "
                                 "infrastructure simulator")
    sub = parser.add_subparsers(dest="cmd", required=True,
                                parser_class=_Parser)

    def common(p):
        p.add_argument("-c", "--config", metavar="FILE",
                       help="key = value configuration file")
        p.add_argument("--set", dest="overrides", action="append",
                       default=[], metavar="KEY=VALUE",
                       help="override one configuration key")
        p.add_argument("--out", metavar="FILE",
                       help="write CSV here instead of stdout")

    p_run = sub.add_parser("run", help="simulate one configuration")
    common(p_run)
    p_run.add_argument("--trace-file", metavar="FILE",
                       help="dump every delivered message")
    p_run.add_argument("--apps-csv", metavar="FILE",
                       help="per-application timing dump")
    p_run.add_argument("--nodes-csv", metavar="FILE",
                       help="per-node activity dump")

    p_sweep = sub.add_parser("sweep", help="sweep configuration axes")
    common(p_sweep)
    p_sweep.add_argument("--axis", action="append", default=[],
                         metavar="KEY=V1,V2,...",
                         help="axis values; first axis varies slowest")
    p_sweep.add_argument("--reps", type=int, metavar="N",
                         help="repetitions per cell with derived seeds")

    p_model = sub.add_parser("model", help="closed-form speedup curve")
    common(p_model)
    p_model.add_argument("--axis", action="append", default=[],
                         metavar="k=V1,V2,...",
                         help="restrict the cluster counts")

    p_cmp = sub.add_parser("compare",
                           help="simulation against the closed form")
    common(p_cmp)
    p_cmp.add_argument("--axis", action="append", default=[],
                       metavar="k=V1,V2,...",
                       help="restrict the cluster counts")

    return parser


def _load(args):
    cfg = SimConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    return apply_overrides(cfg, args.overrides)


def _write(path, lines):
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _k_axis(args, cfg):
    ks = None
    for spec in args.axis:
        key, values = parse_axis(spec)
        if key != "k":
            raise ConfigError(f"only the k axis applies here, got {key!r}")
        ks = values
    if ks is None:
        ks = cluster_counts(cfg.m)
    return ks


def _cmd_run(args):
    cfg = _load(args)
    trace_fh = None
    sink = None
    if args.trace_file:
        trace_fh = open(args.trace_file, "w", encoding="utf-8")
        trace_fh.write(TRACE_HEADER + "\n")
        sink = lambda line: trace_fh.write(line + "\n")
    try:
        result = run_experiment(cfg, trace_sink=sink)
    finally:
        if trace_fh:
            trace_fh.close()
    _write(args.out, render_csv([[result]], aggregate=False))
    if args.apps_csv:
        _write(args.apps_csv, render_apps_csv(result.chip))
    if args.nodes_csv:
        _write(args.nodes_csv, render_nodes_csv(result.chip))
    return 0 if result.valid else 3


def _cmd_sweep(args):
    cfg = _load(args)
    if args.reps is not None:
        cfg = replace(cfg, repetitions=args.reps)
    axes = [parse_axis(spec) for spec in args.axis]
    cells = sweep(cfg, axes)
    _write(args.out, render_csv(cells))
    return 0 if any_valid(cells) else 3


def _cmd_model(args):
    cfg = _load(args)
    ks = _k_axis(args, cfg)
    try:
        points = model_curve(cfg.n, cfg.m, cfg.max_child_len, cfg.c_s,
                             cfg.c_b, ks)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _write(args.out, render_model_csv(points))
    return 0


def _cmd_compare(args):
    cfg = _load(args)
    ks = _k_axis(args, cfg)
    try:
        rows = compare_rows(cfg, ks)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _write(args.out, render_compare_csv(rows))
    return 0 if rows else 3


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "model": _cmd_model,
             "compare": _cmd_compare}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.cmd](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Experiment drivers: configuration, runs, sweeps, CSV output.

A run builds one chip from a `SimConfig`, injects the configured
benchmark workload, simulates to the horizon, and reduces the outcome
to one measurement row.  A sweep repeats that over the cartesian
product of axis values, re-seeding each repetition deterministically,
and appends a `seed=mean` summary row per cell.

A measurement cell is only trusted if every injected application
finished inside the simulated window; cells with misses are dropped
from the CSV rather than reported with truncated numbers.
"""

import itertools
from dataclasses import dataclass, fields, replace
from statistics import fmean

from .analytic import speedup as model_speedup
from .machine import Chip
from .rng import derive_seed
from .traces import gen_independent, gen_interference_schedule

BENCHMARKS = ("independent", "interference")

CSV_COLUMNS = ("experiment", "k", "delta_n_th", "c_s", "c_b", "seed", "n",
               "m", "apps_injected", "apps_completed", "t_r_mean",
               "speedup", "beacons_tx", "beacons_rx", "msgs_total",
               "global_bus_util", "local_bus_util_mean")

_MEASURES = ("apps_injected", "apps_completed", "t_r_mean", "speedup",
             "beacons_tx", "beacons_rx", "msgs_total", "global_bus_util",
             "local_bus_util_mean")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class SimConfig:
    k: int = 0                    # cluster count, must be set explicitly
    m: int = 256                  # processing elements in total
    n: int = 256                  # child tasks per application
    max_child_len: int = 16000    # upper bound on child compute ticks
    benchmark: str = "independent"
    global_bus_width: int = 32    # payload bits moved per tick
    local_bus_width: int = 32
    tx_delay: int = 4
    rx_delay: int = 4
    c_s: int = 8                  # selection cost factor per candidate log
    delta_n_th: int = 4           # beacon threshold on own-total drift
    sim_length: int = 10_000_000
    arrival_mean: int = 7999      # mean gap between app injections
    duty: float = 0.9             # injections stop at duty * sim_length
    seed: int = 1
    repetitions: int = 1

    @property
    def c_b(self):
        return self.tx_delay + self.rx_delay


def validate_config(cfg):
    if cfg.k <= 0:
        raise ConfigError("k (cluster count) must be set to a positive "
                          "value; there is no default")
    if cfg.m <= 0:
        raise ConfigError(f"m must be positive, got {cfg.m}")
    if cfg.m % cfg.k:
        raise ConfigError(f"k={cfg.k} does not divide m={cfg.m}")
    if cfg.benchmark not in BENCHMARKS:
        raise ConfigError(f"unknown benchmark {cfg.benchmark!r}, expected "
                          f"one of {', '.join(BENCHMARKS)}")
    for name in ("n", "max_child_len", "global_bus_width",
                 "local_bus_width", "c_s", "delta_n_th", "sim_length",
                 "arrival_mean", "repetitions"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be at least 1")
    if cfg.tx_delay < 0 or cfg.rx_delay < 0:
        raise ConfigError("bus hop delays cannot be negative")
    if not 0.0 < cfg.duty <= 1.0:
        raise ConfigError(f"duty must be in (0, 1], got {cfg.duty}")
    if cfg.seed < 0:
        raise ConfigError("seed cannot be negative")
    return cfg


_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}


def _parse_value(key, text):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    kind = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind == "int":
            try:
                return int(text, 0)
            except ValueError:
                as_float = float(text)
                if as_float != int(as_float):
                    raise
                return int(as_float)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key}") from None
    return text


def parse_config(text, base=None):
    """Parse `key = value` lines (# starts a comment) over `base`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, "
                              f"got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        values[key] = _parse_value(key, val)
    return replace(base or SimConfig(), **values)


def load_config(path, base=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base)


def apply_overrides(cfg, pairs):
    """Apply `key=value` strings (CLI --set / --axis cells) to a config."""
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, _, val = pair.partition("=")
        key = key.strip()
        values[key] = _parse_value(key, val)
    return replace(cfg, **values)


def parse_axis(text):
    """Parse a sweep axis spec `key=v1,v2,...` into (key, values)."""
    if "=" not in text:
        raise ConfigError(f"expected key=v1,v2,..., got {text!r}")
    key, _, tail = text.partition("=")
    key = key.strip()
    values = [_parse_value(key, v) for v in tail.split(",") if v.strip()]
    if not values:
        raise ConfigError(f"axis {key!r} lists no values")
    return key, values


@dataclass
class RunResult:
    experiment: str
    k: int
    delta_n_th: int
    c_s: int
    c_b: int
    seed: int
    n: int
    m: int
    apps_injected: int
    apps_completed: int
    t_r_mean: float
    speedup: float
    beacons_tx: int
    beacons_rx: int
    msgs_total: int
    global_bus_util: float
    local_bus_util_mean: float
    valid: bool
    final_time: int
    chip: object = None

    def csv_row(self):
        cells = []
        for name in CSV_COLUMNS:
            value = getattr(self, name)
            cells.append(f"{value:.6f}" if isinstance(value, float)
                         else str(value))
        return ",".join(cells)


def run_experiment(cfg, *, trace_sink=None, map_hook=None):
    """Simulate one configuration and reduce it to a RunResult."""
    validate_config(cfg)
    chip = Chip(m=cfg.m, k=cfg.k,
                global_bus_width=cfg.global_bus_width,
                local_bus_width=cfg.local_bus_width,
                tx_delay=cfg.tx_delay, rx_delay=cfg.rx_delay,
                c_s=cfg.c_s, delta_n_th=cfg.delta_n_th)
    chip.trace_sink = trace_sink
    chip.map_hook = map_hook
    if cfg.benchmark == "independent":
        bundle = gen_independent(cfg.n, cfg.m, cfg.max_child_len)
        chip.add_app(bundle, 0, 0)
    else:
        schedule = gen_interference_schedule(
            cfg.n, cfg.max_child_len, cfg.arrival_mean, cfg.duty,
            cfg.sim_length, cfg.k, cfg.seed)
        for inj in schedule:
            chip.add_app(inj.bundle, inj.tick, inj.gmn, inj.prio)
    stats = chip.run(cfg.sim_length)
    done = [app for app in chip.apps if app.done]
    turnarounds = [app.turnaround for app in done]
    speedups = [app.bundle.t_seq / max(1, app.turnaround) for app in done]
    horizon = max(1, min(stats.final_time, cfg.sim_length))
    global_util, local_util = chip.bus_utilization(horizon)
    return RunResult(
        experiment=cfg.benchmark, k=cfg.k, delta_n_th=cfg.delta_n_th,
        c_s=cfg.c_s, c_b=cfg.c_b, seed=cfg.seed, n=cfg.n, m=cfg.m,
        apps_injected=len(chip.apps), apps_completed=len(done),
        t_r_mean=fmean(turnarounds) if turnarounds else 0.0,
        speedup=fmean(speedups) if speedups else 0.0,
        beacons_tx=chip.beacons_tx, beacons_rx=chip.beacons_rx,
        msgs_total=chip.msgs_total, global_bus_util=global_util,
        local_bus_util_mean=local_util,
        valid=bool(chip.apps) and len(done) == len(chip.apps),
        final_time=stats.final_time, chip=chip)


def sweep(base_cfg, axes):
    """Run the cartesian product of axis values.

    `axes` is an ordered list of (field, [values]) pairs; the first
    axis varies slowest.  Returns one list of per-repetition results
    per cell, in cell order.  Repetition r of cell c runs under
    derive_seed(seed, c * repetitions + r), so any cell can be
    reproduced alone.
    """
    combos = (list(itertools.product(*(vals for _, vals in axes)))
              if axes else [()])
    cells = []
    for cell_index, combo in enumerate(combos):
        cfg = base_cfg
        for (field_name, _), value in zip(axes, combo):
            cfg = replace(cfg, **{field_name: value})
        validate_config(cfg)
        reps = []
        for r in range(cfg.repetitions):
            run_seed = derive_seed(cfg.seed,
                                   cell_index * cfg.repetitions + r)
            reps.append(run_experiment(replace(cfg, seed=run_seed)))
        cells.append(reps)
    return cells


def _mean_row(reps):
    first = reps[0]
    lead = {"experiment": first.experiment, "k": first.k,
            "delta_n_th": first.delta_n_th, "c_s": first.c_s,
            "c_b": first.c_b, "seed": "mean", "n": first.n, "m": first.m}
    cells = []
    for name in CSV_COLUMNS:
        if name in lead:
            cells.append(str(lead[name]))
        else:
            cells.append(f"{fmean(getattr(r, name) for r in reps):.6f}")
    return ",".join(cells)


def render_csv(cells, aggregate=True):
    """CSV lines for sweep cells; rows with misses are suppressed."""
    lines = [",".join(CSV_COLUMNS)]
    for reps in cells:
        good = [r for r in reps if r.valid]
        lines.extend(r.csv_row() for r in good)
        if aggregate and good:
            lines.append(_mean_row(good))
    return lines


def any_valid(cells):
    return any(r.valid for reps in cells for r in reps)


MODEL_COLUMNS = ("k", "c_s", "c_b", "omega_cmp", "omega_msg",
                 "speedup_model")


def render_model_csv(points):
    lines = [",".join(MODEL_COLUMNS)]
    for p in points:
        lines.append(",".join((str(p.k), str(p.cost_factor),
                               str(p.hop_cost), f"{p.mapping:.6f}",
                               f"{p.messaging:.6f}", f"{p.speedup:.6f}")))
    return lines


COMPARE_COLUMNS = ("k", "c_s", "c_b", "speedup_sim", "speedup_model",
                   "ratio")


def compare_rows(cfg, ks):
    """Simulated vs predicted speedup, one row per cluster count."""
    rows = []
    for k in ks:
        result = run_experiment(replace(cfg, k=k,
                                        benchmark="independent"))
        predicted = model_speedup(cfg.n, cfg.m, k, cfg.max_child_len,
                                  cfg.c_s, cfg.c_b)
        if not result.valid:
            continue
        rows.append((k, cfg.c_s, cfg.c_b, result.speedup, predicted,
                     result.speedup / predicted))
    return rows


def render_compare_csv(rows):
    lines = [",".join(COMPARE_COLUMNS)]
    for k, c_s, c_b, sim, model, ratio in rows:
        lines.append(",".join((str(k), str(c_s), str(c_b), f"{sim:.6f}",
                               f"{model:.6f}", f"{ratio:.6f}")))
    return lines


APPS_COLUMNS = ("app_id", "inject_tick", "complete_tick", "t_r",
                "n_children", "miss")


def render_apps_csv(chip):
    lines = [",".join(APPS_COLUMNS)]
    for app in chip.apps:
        lines.append(",".join((
            str(app.app_id), str(app.inject_tick),
            str(app.complete_tick), str(app.turnaround),
            str(app.bundle.n), str(int(not app.done)))))
    return lines


NODES_COLUMNS = ("node", "kind", "cluster", "tasks_run", "syscalls",
                 "handled", "busy_ticks", "beacons_tx", "beacons_rx")


def render_nodes_csv(chip):
    lines = [",".join(NODES_COLUMNS)]
    for mgr in chip.managers:
        lines.append(",".join((
            f"G{mgr.index}", "gmn", str(mgr.index), "0", "0",
            str(mgr.handled), str(mgr.busy_ticks), str(mgr.beacons_tx),
            str(mgr.beacons_rx))))
    for lc in chip.lcs:
        lines.append(",".join((
            f"L{lc.index}", "lc", str(lc.cluster), "0", str(lc.syscalls),
            "0", "0", "0", "0")))
    for pe in chip.pes:
        lines.append(",".join((
            f"P{pe.index}", "pe", str(pe.index // chip.ppc),
            str(pe.tasks_run), "0", "0", str(pe.busy_ticks), "0", "0")))
    return lines

"""Command line: ``finslerwalk {simulate,generator,converge,exit-times}``."""
import argparse
import csv
import datetime as _dt
import json
import os
import sys

import numpy as np

from . import __version__
from . import config as cfgmod
from . import generator as gen
from .errors import FinslerWalkError

EXIT_CODES = {
    "config": 2,
    "geometry": 3,
    "atlas": 4,
    "integration": 5,
    "sampling": 6,
    "walk": 7,
    "internal": 1,
}


def timestamp():
    """UTC time of the run; ``SOURCE_DATE_EPOCH`` pins it for reproducible files."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch else _dt.datetime.now(_dt.timezone.utc)
    return when.replace(microsecond=0).isoformat()


def header_lines(command, cfg):
    lines = [
        f"finslerwalk {__version__}",
        f"command: {command}",
        f"seed: {cfg['walk.seed']}",
        f"timestamp: {timestamp()}",
    ]
    lines += [f"config: {line}" for line in cfg.to_ini().splitlines()]
    return lines


def _write_table(path, header, columns, rows, footer=()):
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        for line in footer:
            fh.write(f"# {line}\n")
    return path


def cmd_simulate(cfg, out_dir, svg=False):
    from .walk import interpolate, simulate_discrete, subordinate, write_paths_csv

    wc = cfgmod.walk_config(cfg)
    kind = cfg["walk.kind"]
    horizon = cfg["walk.horizon"]
    steps = cfg["walk.steps"]
    if kind == "subordinated":
        horizon = horizon if horizon is not None else (steps / wc.N if steps is not None else 1.0)
        ens = simulate_discrete(wc, wc.steps_for_horizon(horizon))

        def regen(pid):
            return lambda n: simulate_discrete(wc, int(n * 1.1) + 1, [pid]).path(0)

        paths = [subordinate(p, wc.N, horizon, wc.seed, regen(p.path_id)) for p in ens.paths()]
    else:
        if steps is None:
            steps = wc.steps_for_horizon(horizon) if horizon is not None else 100
        ens = simulate_discrete(wc, steps)
        paths = ens.paths()
        if kind == "interpolated":
            times = cfg["walk.times"]
            times = np.linspace(0.0, steps / wc.N, 4 * steps + 1) if times is None else np.asarray(times)
            paths = [interpolate(p, wc.N, times, wc.metric, cfg["study.h_ode"]) for p in paths]
    out = os.path.join(out_dir, "paths.csv")
    header = header_lines("simulate", cfg) + [f"N: {wc.N!r}", f"paths: {len(paths)}", f"kind: {kind}"]
    with open(out, "w", newline="") as fh:
        write_paths_csv(paths, fh, header)
    written = [out]
    if svg:
        from .plotting import plot_paths

        written.append(plot_paths(paths, wc.metric.atlas, os.path.join(out_dir, "paths.svg")))
    return written


def generator_records(cfg):
    metric = cfgmod.build_metric(cfg)
    family = cfgmod.build_family(cfg)
    f = cfgmod.build_test_function(cfg, metric)
    records = []
    for chart, x in cfgmod.probes(cfg, metric):
        est = gen.generator_estimate(metric, family, x, chart, with_drift=cfg["study.drift"])
        assoc = gen.associated_metric(est.symbol)
        est.extra = {"function": f.name, "A_f": est.apply(f), "associated_metric": assoc.metric.tolist()}
        if metric.name == "katok" and chart == 0 and abs(x[1]) < np.pi / 2:
            est.extra["katok_closed_form_drift"] = gen.katok_drift_closed_form(metric.r, x[1]).tolist()
        records.append(est.to_record())
    return records


def cmd_generator(cfg, out_dir, svg=False):
    doc = {"header": header_lines("generator", cfg), "estimates": generator_records(cfg)}
    out = os.path.join(out_dir, "generator.json")
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return [out]


def cmd_converge(cfg, out_dir, svg=False):
    metric = cfgmod.build_metric(cfg)
    family = cfgmod.build_family(cfg)
    f = cfgmod.build_test_function(cfg, metric)
    probes = cfgmod.probes(cfg, metric)
    try:
        table = gen.convergence_study(metric, family, f, probes, cfg["study.ns"], cfg["study.h_ode"], cfg["walk.alpha"])
    except ValueError as exc:
        raise cfg.error("study.ns", str(exc)) from None
    cols = ["N", "sup_error"] + [f"error_probe{j}" for j in range(len(probes))]
    rows = [[float(N), float(e)] + [float(v) for v in pe] for N, e, pe in zip(table.Ns, table.errors, table.probe_errors)]
    out = os.path.join(out_dir, "convergence.csv")
    _write_table(out, header_lines("converge", cfg) + [f"function: {f.name}"], cols, rows, [f"slope: {table.slope!r}"])
    written = [out]
    if svg:
        from .plotting import plot_convergence

        written.append(plot_convergence(table, os.path.join(out_dir, "convergence.svg")))
    return written


def cmd_exit_times(cfg, out_dir, svg=False):
    wc = cfgmod.walk_config(cfg)
    table = gen.exit_time_study(wc, cfg["study.deltas"], cfg["study.times"])
    cols = ["delta", "t", "n", "count", "p", "lo", "hi", "ratio", "ratio_lo", "ratio_hi"]
    rows = [[r[c] for c in cols] for r in table.rows]
    footer = [f"fit delta={d!r}: C={c!r}" for d, c in table.fits.items()]
    out = os.path.join(out_dir, "exit_times.csv")
    _write_table(out, header_lines("exit-times", cfg) + [f"N: {wc.N!r}", f"paths: {wc.n_paths}"], cols, rows, footer)
    written = [out]
    if svg:
        from .plotting import plot_exit

        written.append(plot_exit(table, os.path.join(out_dir, "exit_times.svg")))
    return written


COMMANDS = {
    "simulate": cmd_simulate,
    "generator": cmd_generator,
    "converge": cmd_converge,
    "exit-times": cmd_exit_times,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="finslerwalk", description="Geodesic random walks on Finsler manifolds.")
    parser.add_argument("--version", action="version", version=f"finslerwalk {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="INI file with [metric], [measure], [walk], [study] sections")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--paths", type=int)
    parser.add_argument("--N", type=float, dest="N")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--out-dir", default=".")
    parser.add_argument("--svg", action="store_true", help="also render figures as SVG")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config value")
    return parser


def _overrides(args, extra):
    out = list(args.set)
    for item in extra:
        if not (item.startswith("--") and "=" in item and "." in item.split("=", 1)[0]):
            raise SystemExit(f"finslerwalk: unrecognized argument {item!r}")
        out.append(item[2:])
    for flag, key in (("seed", "walk.seed"), ("paths", "walk.paths"), ("N", "walk.n"), ("threads", "walk.threads")):
        value = getattr(args, flag)
        if value is not None:
            out.append(f"{key}={value}")
    return out


def _report(exc):
    record = {"error": exc.category, "type": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "line", None) is not None:
        record["line"] = exc.line
    if getattr(exc, "path", None) is not None:
        record["path"] = str(exc.path)
    sys.stderr.write(json.dumps(record) + "\n")
    return EXIT_CODES.get(exc.category, 1)


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = _overrides(args, extra)
        cfg = cfgmod.load(args.config, overrides) if args.config else cfgmod.parse("", None, overrides)
        os.makedirs(args.out_dir, exist_ok=True)
        for path in COMMANDS[args.command](cfg, args.out_dir, args.svg):
            print(path)
    except FinslerWalkError as exc:
        return _report(exc)
    except ValueError as exc:
        # argument-level problems surfacing from the library
        return _report(type("InvalidArgument", (FinslerWalkError,), {"category": "config"})(str(exc)))
    return 0


if __name__ == "__main__":
    sys.exit(main())

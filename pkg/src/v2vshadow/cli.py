"""Command-line entry point.

Verbs: ``simulate`` (run a sweep), ``fit`` (dual-slope fit of a gain CSV),
``classify`` (link classes of a scene file) and ``metrics`` (recompute the
metric CSVs of a run from its event log).

Exit status: 0 on success, 1 on configuration errors, 2 on runtime failures.
"""
import argparse
import csv
import itertools
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import config as C
from ._validation import check_keys
from .estimation import DualSlopeRegressor, GainSeries
from .exceptions import ConfigError, FitError, ModelDomainError
from .geometry import BUILDING, LinkClass, Rect, Road, VehicleBody, classify_link, nlos_geometry
from .propagation import NlosParams, nlos_path_loss_db
from .runner import recompute_metrics, run_sweep

log = logging.getLogger("v2vshadow")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="v2vshadow", description="LOS/OLOS shadow-fading channel simulator and estimation tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a model x density x seed sweep")
    s.add_argument("--config", help="YAML run configuration")
    s.add_argument("--seed", type=int, action="append", help="seed (repeat for several); overrides sweep.seeds")
    s.add_argument("--out", help="output directory; overrides output.dir")
    s.add_argument("--model", action="append", type=str.upper, choices=("LOS_OLOS", "NAKAGAMI"),
                   help="channel model (repeatable); overrides sweep.models")
    s.add_argument("--density", action="append",
                   help="vehicles/km or a profile name 1s/2s/3s (repeatable); overrides sweep.densities")
    s.add_argument("--desk-scale", action="store_true", help="2 km road, 100 s, at most 200 vehicles")
    s.add_argument("--event-log", action="store_true", help="also write events.csv and links.csv")
    s.add_argument("--parallelism", type=int, help="concurrent runs")

    f = sub.add_parser("fit", help="fit the dual-slope model to a gain CSV (distance_m, gain_db, censored)")
    f.add_argument("input")
    f.add_argument("--d0", type=float, default=10.0)
    f.add_argument("--db", type=float, default=104.0)
    f.add_argument("--bins", type=int, default=25)
    f.add_argument("--single-slope", action="store_true")
    f.add_argument("--out", help="write the result JSON here instead of stdout")

    c = sub.add_parser("classify", help="classify every vehicle pair of a scene file")
    c.add_argument("scene", help="YAML scene with vehicles, buildings and roads")
    c.add_argument("--out", help="write CSV here instead of stdout")

    m = sub.add_parser("metrics", help="recompute metric CSVs from a run's event log")
    m.add_argument("run_dir")
    m.add_argument("--out", help="directory for the CSVs (default: the run directory)")
    return p


def _parse_density(text):
    try:
        return float(text)
    except ValueError:
        return text


def cmd_simulate(args):
    cfg = C.load(args.config) if args.config else C.from_dict({})
    sweep = cfg.sweep
    if args.model:
        sweep = replace(sweep, models=tuple(args.model))
    if args.density:
        sweep = C.SweepOptions(sweep.models, tuple(_parse_density(d) for d in args.density), sweep.seeds,
                               sweep.parallelism)
    if args.seed:
        sweep = replace(sweep, seeds=tuple(args.seed))
    if args.parallelism is not None:
        sweep = replace(sweep, parallelism=args.parallelism)
    output = cfg.output
    if args.out:
        output = replace(output, dir=args.out)
    if args.event_log:
        output = replace(output, event_log=True)
    cfg = replace(cfg, sweep=sweep, output=output)
    if args.desk_scale:
        cfg = C.apply_desk_scale(cfg)
    summaries, failed = run_sweep(cfg)
    for s in summaries:
        if "error" in s:
            print(f"{s['run']}: FAILED {s['error']}")
        else:
            print(f"{s['run']}: prp(0-100 m, tracked)={s['prp_0_100m_tracked']} "
                  f"transmissions={s['stats']['transmissions']}")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_fit(args):
    try:
        series = GainSeries.from_csv(args.input)
    except OSError as e:
        raise ConfigError(f"cannot read {args.input}: {e}") from None
    except (KeyError, ValueError) as e:
        raise ConfigError(f"malformed gain CSV {args.input}: {e}") from None
    reg = DualSlopeRegressor(d0=args.d0, db=args.db, n_bins=args.bins, single_slope=args.single_slope)
    reg.fit(series.distance_m, series.gain_db, series.censored)
    result = {
        "n1": reg.n1_, "n2": reg.n2_, "pl0_db": reg.pl0_, "sigma_db": reg.sigma_,
        "d0_m": args.d0, "db_m": args.db, "samples": len(series),
        "censored": int(series.censored.sum()), "bins_used": int(reg.bin_distance_.size),
    }
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _scene(path):
    try:
        with open(path) as f:
            data = C.read_yaml(f) or {}
    except OSError as e:
        raise ConfigError(f"cannot read scene {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("scene root must be a mapping")
    check_keys(data, {"vehicles", "buildings", "roads", "fresnel"}, "scene")
    try:
        vehicles = [
            VehicleBody.at(int(v["id"]), float(v["x"]), float(v["y"]), float(v.get("heading", 0.0)),
                           float(v.get("length", 4.8)), float(v.get("width", 1.8)), float(v.get("height", 1.47)))
            for v in data.get("vehicles", [])
        ]
        buildings = [
            Rect((float(b["x"]), float(b["y"])), float(b["length"]), float(b["width"]),
                 float(b.get("heading", 0.0)), b.get("height"), BUILDING)
            for b in data.get("buildings", [])
        ]
        roads = [Road(tuple(r["start"]), tuple(r["end"]), float(r["width"]), str(r.get("name", "")))
                 for r in data.get("roads", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed scene entry: {e}") from None
    fresnel = data.get("fresnel") or {}
    check_keys(fresnel, {"wavelength_m", "clearance_fraction"}, "scene.fresnel")
    return vehicles, buildings, roads, fresnel


def cmd_classify(args):
    vehicles, buildings, roads, fresnel = _scene(args.scene)
    obstacles = [v.footprint for v in vehicles] + buildings
    rows = []
    for tx, rx in itertools.combinations(vehicles, 2):
        cls = classify_link(tx, rx, obstacles, roads, fresnel.get("wavelength_m"),
                            fresnel.get("clearance_fraction", 0.6))
        loss = ""
        if cls == LinkClass.NLOS:
            try:
                loss = repr(nlos_path_loss_db(NlosParams(), nlos_geometry(tx.antenna, rx.antenna, roads)))
            except ConfigError:
                loss = ""
        elif cls == LinkClass.NLOS_PARALLEL:
            loss = "inf"
        rows.append([tx.id, rx.id, repr(math.dist(tx.antenna, rx.antenna)), cls.name, loss])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["tx", "rx", "distance_m", "link_class", "nlos_loss_db"])
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_metrics(args):
    run_dir = Path(args.run_dir)
    try:
        cfg = json.loads((run_dir / "config.json").read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {run_dir / 'config.json'}: {e}") from None
    opts = C.MetricsOptions(**cfg.get("metrics", {}))
    if not (run_dir / "events.csv").exists():
        raise ConfigError(f"{run_dir} has no events.csv; rerun simulate with --event-log")
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    recompute_metrics(run_dir, opts, cfg["radio"]["tx_power_dbm"], out)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "classify": cmd_classify, "metrics": cmd_metrics}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, ModelDomainError, RuntimeError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Model x density x seed sweeps and their output tree.

Each run writes into ``<out>/runs/<model>_d<density>_s<seed>/``:

- ``config.json``           effective configuration of the run
- ``summary.json``          scalar results and model notes
- ``tracked_pairs.csv``     the tracked vehicle pairs and their intervals
- ``los_probability.csv``, ``prp.csv``, ``prp_all.csv``, ``iat_cdf.csv``,
  ``avg_power.csv``         metric curves
- ``events.csv``, ``links.csv``  event and link-state logs (when enabled)

The sweep root also gets ``config.json`` and a merged ``summary.json``.
"""
import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics as M
from .netsim import LINK_COLUMNS, OUTCOMES, RECORD_COLUMNS, simulate

log = logging.getLogger(__name__)

_OUTCOME_CODE = {name: k for k, name in enumerate(OUTCOMES)}
_TRACKED_COLUMNS = ("fast", "slow", "start_ns", "end_ns")


def run_name(model, density, seed):
    return f"{model.lower()}_d{density:g}_s{seed}"


# -- log IO ----------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_events(path, records):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        cols = [records[c] for c in RECORD_COLUMNS[:-1]]
        for *row, out in zip(*cols, records["outcome"]):
            w.writerow([_cell(v) for v in row] + [OUTCOMES[int(out)]])


def read_events(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != RECORD_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        rows = list(reader)
    types = dict(timestamp_ns=np.int64, tx=np.int64, rx=np.int64, distance_m=float,
                 link_class=np.int8, prx_dbm=float)
    out = {}
    for j, name in enumerate(RECORD_COLUMNS[:-1]):
        conv = int if types[name] is not float else float
        out[name] = np.array([conv(r[j]) for r in rows], dtype=types[name])
    out["outcome"] = np.array([_OUTCOME_CODE[r[-1]] for r in rows], dtype=np.int8)
    return out


def _write_columns(path, table, columns):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in zip(*(table[c] for c in columns)):
            w.writerow([_cell(v) for v in row])


def _read_columns(path, types):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != tuple(types):
            raise ValueError(f"{path}: unexpected columns {header}")
        rows = list(reader)
    out = {}
    for j, (name, dt) in enumerate(types.items()):
        conv = float if dt is float else int
        out[name] = np.array([conv(r[j]) for r in rows], dtype=dt)
    return out


def write_links(path, links):
    _write_columns(path, links, LINK_COLUMNS)


def read_links(path):
    return _read_columns(path, dict(timestamp_ns=np.int64, a=np.int64, b=np.int64, distance_m=float,
                                    link_class=np.int8, gain_db=float))


def write_tracked(path, tracked):
    table = {c: [p[c] for p in tracked] for c in _TRACKED_COLUMNS}
    _write_columns(path, table, _TRACKED_COLUMNS)


def read_tracked(path):
    cols = _read_columns(path, {c: np.int64 for c in _TRACKED_COLUMNS})
    return [dict(zip(_TRACKED_COLUMNS, map(int, row))) for row in zip(*(cols[c] for c in _TRACKED_COLUMNS))]


# -- metrics bundle -------------------------------------------------------------------


def tracked_records(records, tracked):
    """Records of tracked pairs, restricted to the interval each pair was tracked."""
    keep = np.zeros(records["tx"].size, dtype=bool)
    for p in tracked:
        a, b = p["fast"], p["slow"]
        m = (((records["tx"] == a) & (records["rx"] == b)) | ((records["tx"] == b) & (records["rx"] == a)))
        m &= (records["timestamp_ns"] >= p["start_ns"]) & (records["timestamp_ns"] < p["end_ns"])
        keep |= m
    return {k: v[keep] for k, v in records.items()}


def compute_bundle(records, links, tracked, tx_power_dbm, opts):
    """All metric tables of one run, keyed by output file stem."""
    kw = dict(bin_m=opts.bin_m, max_distance_m=opts.max_distance_m)
    trk = tracked_records(records, tracked)
    return {
        "los_probability": M.compute_los_probability(links["distance_m"], links["link_class"], **kw),
        "prp": M.compute_prp(trk["distance_m"], trk["outcome"], n_boot=opts.n_boot, seed=opts.bootstrap_seed, **kw),
        "prp_all": M.compute_prp(records["distance_m"], records["outcome"], n_boot=opts.n_boot,
                                 seed=opts.bootstrap_seed, **kw),
        "iat_cdf": M.compute_iat_cdf(trk["timestamp_ns"], trk["tx"], trk["rx"], trk["distance_m"], trk["outcome"], **kw),
        "avg_power": M.compute_average_power(links["distance_m"], links["link_class"],
                                             tx_power_dbm + links["gain_db"], **kw),
    }


def write_bundle(run_dir, bundle):
    for name, table in bundle.items():
        table.to_csv(Path(run_dir) / f"{name}.csv")


def recompute_metrics(run_dir, opts, tx_power_dbm, out_dir=None):
    """Rebuild the metric CSVs of a run from its stored logs."""
    run_dir = Path(run_dir)
    records = read_events(run_dir / "events.csv")
    links = read_links(run_dir / "links.csv")
    tracked = read_tracked(run_dir / "tracked_pairs.csv")
    bundle = compute_bundle(records, links, tracked, tx_power_dbm, opts)
    write_bundle(out_dir or run_dir, bundle)
    return bundle


# -- runs -------------------------------------------------------------------------------


def _json_dump(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")


def _finite(v):
    v = float(v)
    return v if np.isfinite(v) else None


def run_one(cfg, model, density, seed, out_root):
    """Execute one grid point and write its directory. Returns its summary dict."""
    scen = replace(cfg.scenario, density_per_km=float(density), seed=int(seed))
    chan = replace(cfg.channel, model=model)
    run_cfg = replace(cfg, scenario=scen, channel=chan)
    name = run_name(model, density, seed)
    run_dir = Path(out_root) / "runs" / name
    run_dir.mkdir(parents=True, exist_ok=True)
    _json_dump(run_dir / "config.json", run_cfg.to_dict())

    res = simulate(scen, cfg.radio, chan, seed=int(seed), record_mode=cfg.output.record_mode,
                   link_log_interval_s=cfg.output.link_log_interval_s)
    write_tracked(run_dir / "tracked_pairs.csv", res.tracked_pairs)
    if cfg.output.event_log:
        write_events(run_dir / "events.csv", res.records)
        write_links(run_dir / "links.csv", res.links)
    bundle = compute_bundle(res.records, res.links, res.tracked_pairs, cfg.radio.tx_power_dbm, cfg.metrics)
    write_bundle(run_dir, bundle)

    prp = bundle["prp"]
    summary = {
        "run": name,
        "model": model,
        "density_per_km": float(density),
        "seed": int(seed),
        "stats": {k: (_finite(v) if isinstance(v, float) else v) for k, v in res.stats.items()},
        "prp_0_100m_tracked": _finite(prp["prp"][0]) if prp.n_rows else None,
        "prp_0_100m_all": _finite(bundle["prp_all"]["prp"][0]) if prp.n_rows else None,
        "iat_le_110ms_0_100m": _finite(M.cdf_at(bundle["iat_cdf"], 0.0, 0.110)),
        "tracked_pairs": len(res.tracked_pairs),
        "notes": list(chan.metadata) + [
            "tracked pairs: first eligible overtaking pairs after warm-up, replaced when a vehicle leaves",
        ],
    }
    _json_dump(run_dir / "summary.json", summary)
    return summary


def _run_star(args):
    cfg, model, density, seed, out_root = args
    try:
        return run_one(cfg, model, density, seed, out_root)
    except Exception as e:  # reported per run, the sweep carries on
        log.exception("run %s failed", run_name(model, density, seed))
        return {"run": run_name(model, density, seed), "error": f"{type(e).__name__}: {e}"}


def run_sweep(cfg, out_dir=None):
    """Run the whole grid; returns ``(summaries, n_failed)``."""
    out_root = Path(out_dir or cfg.output.dir)
    try:
        out_root.mkdir(parents=True, exist_ok=True)
        probe = out_root / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise RuntimeError(f"output directory {out_root} is not writable: {e}") from None
    _json_dump(out_root / "config.json", cfg.to_dict())
    jobs = [(cfg, m, d, s, out_root) for m, d, s in cfg.runs()]
    workers = min(cfg.sweep.parallelism, len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            summaries = list(ex.map(_run_star, jobs))
    else:
        summaries = [_run_star(j) for j in jobs]
    failed = sum(1 for s in summaries if "error" in s)
    _json_dump(out_root / "summary.json", {"runs": summaries, "failed": failed})
    return summaries, failed

"""Distance-binned metrics computed from simulation logs.

Every function returns a :class:`Table`, an ordered mapping of equal-length
numpy columns that serializes to CSV with a fixed column order.
"""
import csv
import math

import numpy as np

from .geometry import LinkClass
from .netsim import RECEIVED
from .propagation import mix_received_power
from .rng import link_key


class Table(dict):
    """Ordered columns of equal length."""

    @property
    def n_rows(self):
        return len(next(iter(self.values()))) if self else 0

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            write_table(f, self)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = list(reader)
        out = cls()
        for j, name in enumerate(header):
            out[name] = np.array([float(r[j]) if r[j] else math.nan for r in rows])
        return out


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def write_table(f, table):
    w = csv.writer(f, lineterminator="\n")
    cols = list(table)
    w.writerow(cols)
    for row in zip(*(table[c] for c in cols)):
        w.writerow([_fmt(v) for v in row])


def distance_bins(max_distance_m, bin_m=100.0):
    """Bin edges ``0, bin_m, ...`` covering ``[0, max_distance_m]``."""
    n = max(int(math.ceil(max_distance_m / bin_m - 1e-9)), 1)
    return bin_m * np.arange(n + 1)


def _bin_index(distance, edges):
    idx = np.searchsorted(edges, distance, side="right") - 1
    idx[(distance < edges[0]) | (distance >= edges[-1])] = -1
    return idx


def compute_los_probability(distance_m, link_class, bin_m=100.0, max_distance_m=1000.0):
    """Fraction of link samples in each class per distance bin.

    NLOS and parallel-street samples are pooled as ``p_nlos``. Empty bins
    carry NaN probabilities.
    """
    d = np.asarray(distance_m, dtype=float)
    c = np.asarray(link_class)
    edges = distance_bins(max_distance_m, bin_m)
    idx = _bin_index(d, edges)
    nb = edges.size - 1
    ok = idx >= 0
    n = np.bincount(idx[ok], minlength=nb)
    counts = {}
    for name, classes in (("los", (LinkClass.LOS,)), ("olos", (LinkClass.OLOS,)),
                          ("nlos", (LinkClass.NLOS, LinkClass.NLOS_PARALLEL))):
        m = ok & np.isin(c, classes)
        counts[name] = np.bincount(idx[m], minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = {k: np.where(n > 0, v / np.maximum(n, 1), np.nan) for k, v in counts.items()}
    return Table(
        bin_lo_m=edges[:-1], bin_hi_m=edges[1:], n=n,
        p_los=probs["los"], p_olos=probs["olos"], p_nlos=probs["nlos"],
    )


def compute_prp(distance_m, outcome, bin_m=100.0, max_distance_m=1000.0, n_boot=1000, ci=0.95, seed=0):
    """Packet reception probability per distance bin with a bootstrap band.

    The band resamples the records of each bin with replacement, which for a
    success fraction amounts to binomial draws; ``seed`` fixes it.
    """
    d = np.asarray(distance_m, dtype=float)
    ok_rx = np.asarray(outcome) == RECEIVED
    edges = distance_bins(max_distance_m, bin_m)
    idx = _bin_index(d, edges)
    nb = edges.size - 1
    v = idx >= 0
    n = np.bincount(idx[v], minlength=nb)
    k = np.bincount(idx[v & ok_rx], minlength=nb)
    prp = np.where(n > 0, k / np.maximum(n, 1), np.nan)
    lo = np.full(nb, np.nan)
    hi = np.full(nb, np.nan)
    rng = np.random.default_rng(seed)
    q = (1.0 - ci) / 2.0
    for b in range(nb):
        if n[b] == 0:
            continue
        boot = rng.binomial(n[b], prp[b], size=n_boot) / n[b]
        lo[b], hi[b] = np.quantile(boot, [q, 1.0 - q])
    return Table(bin_lo_m=edges[:-1], bin_hi_m=edges[1:], n=n, received=k, prp=prp, ci_lo=lo, ci_hi=hi)


def pair_mask(tx, rx, pairs):
    """Records whose unordered (tx, rx) pair is one of ``pairs``."""
    keys = link_key(np.asarray(tx, dtype=np.int64), np.asarray(rx, dtype=np.int64))
    want = np.array([int(link_key(a, b)) for a, b in pairs], dtype=np.uint64)
    return np.isin(keys, want)


def inter_arrival_times(timestamp_ns, tx, rx, distance_m, outcome):
    """Gaps (s) between consecutive successful receptions of each ordered (tx, rx) pair.

    Returns ``(iat_s, distance_m)``, each gap tagged with the distance of the
    reception that closes it.
    """
    t = np.asarray(timestamp_ns, dtype=np.int64)
    tx = np.asarray(tx, dtype=np.int64)
    rx = np.asarray(rx, dtype=np.int64)
    d = np.asarray(distance_m, dtype=float)
    ok = np.asarray(outcome) == RECEIVED
    t, tx, rx, d = t[ok], tx[ok], rx[ok], d[ok]
    order = np.lexsort((t, rx, tx))
    t, tx, rx, d = t[order], tx[order], rx[order], d[order]
    same = (tx[1:] == tx[:-1]) & (rx[1:] == rx[:-1])
    gaps = (t[1:] - t[:-1])[same] / 1e9
    return gaps, d[1:][same]


def compute_iat_cdf(timestamp_ns, tx, rx, distance_m, outcome, bin_m=100.0, max_distance_m=1000.0):
    """Empirical CDF of the packet inter-arrival time per distance bin.

    One row per (bin, distinct gap value); ``cdf`` reaches 1 at the largest
    gap of each populated bin.
    """
    gaps, d = inter_arrival_times(timestamp_ns, tx, rx, distance_m, outcome)
    edges = distance_bins(max_distance_m, bin_m)
    idx = _bin_index(d, edges)
    cols = {k: [] for k in ("bin_lo_m", "bin_hi_m", "n", "iat_s", "cdf")}
    for b in range(edges.size - 1):
        g = np.sort(gaps[idx == b])
        if g.size == 0:
            continue
        vals, counts = np.unique(g, return_counts=True)
        cdf = np.cumsum(counts) / g.size
        cols["bin_lo_m"].append(np.full(vals.size, edges[b]))
        cols["bin_hi_m"].append(np.full(vals.size, edges[b + 1]))
        cols["n"].append(np.full(vals.size, g.size))
        cols["iat_s"].append(vals)
        cols["cdf"].append(cdf)
    dtypes = dict(bin_lo_m=float, bin_hi_m=float, n=np.int64, iat_s=float, cdf=float)
    return Table({k: np.concatenate(v) if v else np.empty(0, dtypes[k]) for k, v in cols.items()})


def cdf_at(iat_table, bin_lo_m, x_s):
    """Value of the inter-arrival CDF of one bin at ``x_s`` seconds (NaN if the bin is empty)."""
    m = iat_table["bin_lo_m"] == bin_lo_m
    if not m.any():
        return math.nan
    vals, cdf = iat_table["iat_s"][m], iat_table["cdf"][m]
    k = np.searchsorted(vals, x_s, side="right")
    return 0.0 if k == 0 else float(cdf[k - 1])


def compute_average_power(distance_m, link_class, prx_dbm, bin_m=100.0, max_distance_m=1000.0):
    """Averaged received power per class and the probability-weighted mix.

    For LOS and OLOS each bin reports the median (dBm) and the linear-domain
    mean (dBm) of the samples. Log-normal shadowing puts the mean above the
    median. The mixed curve weights the class means by the class
    frequencies of the same bin, in milliwatts.
    """
    d = np.asarray(distance_m, dtype=float)
    c = np.asarray(link_class)
    p = np.asarray(prx_dbm, dtype=float)
    edges = distance_bins(max_distance_m, bin_m)
    idx = _bin_index(d, edges)
    nb = edges.size - 1
    out = Table(bin_lo_m=edges[:-1], bin_hi_m=edges[1:])
    probs = compute_los_probability(d, c, bin_m, max_distance_m)
    means_mw = {}
    for name, cls in (("los", LinkClass.LOS), ("olos", LinkClass.OLOS)):
        med = np.full(nb, np.nan)
        mean = np.full(nb, np.nan)
        n = np.zeros(nb, dtype=np.int64)
        sel = (c == cls) & (idx >= 0)
        for b in range(nb):
            v = p[sel & (idx == b)]
            n[b] = v.size
            if v.size:
                med[b] = np.median(v)
                mean[b] = 10.0 * np.log10(np.mean(10.0 ** (v / 10.0)))
        out[f"n_{name}"] = n
        out[f"{name}_median_dbm"] = med
        out[f"{name}_mean_dbm"] = mean
        means_mw[name] = np.where(np.isnan(mean), 0.0, 10.0 ** (np.nan_to_num(mean, nan=0.0) / 10.0))
    pl = np.nan_to_num(probs["p_los"], nan=0.0)
    po = np.nan_to_num(probs["p_olos"], nan=0.0)
    mixed = mix_received_power(pl, po, means_mw["los"], means_mw["olos"])
    mixed_dbm = np.full(nb, np.nan)
    pos = mixed > 0
    mixed_dbm[pos] = 10.0 * np.log10(mixed[pos])
    out["p_los"] = probs["p_los"]
    out["p_olos"] = probs["p_olos"]
    out["mixed_mean_dbm"] = mixed_dbm
    return out

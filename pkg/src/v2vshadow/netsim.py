"""Discrete-event broadcast simulation over the highway scenario.

Every vehicle broadcasts periodic beacons with a CSMA channel access
(AIFS, random backoff frozen while the medium is busy, no ACKs). Received
power per link comes from the channel stack; a receiver locks onto the
earliest frame above sensitivity and decodes it when the SINR stays above
the threshold for the whole frame.

Time is kept in integer nanoseconds so event ordering is exact.
"""
import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive
from .channel import LOS_OLOS, NAKAGAMI, ChannelConfig, gain_matrix_db, nakagami_mean_gain_db
from .exceptions import ConfigError
from .geometry import LinkClass, classify_axis_aligned
from .mobility import Highway, ScenarioConfig, select_tracked_pairs
from .rng import link_key
from .shadowing import ShadowField

log = logging.getLogger(__name__)

NS = 1_000_000_000

RECEIVED, CHANNEL_LOSS, COLLISION, BUSY_DROP = 0, 1, 2, 3
OUTCOMES = ("RECEIVED", "CHANNEL_LOSS", "COLLISION", "BUSY_DROP")
_PENDING = -1

# event kinds, in processing order for equal timestamps
_MOBILITY, _TX_END, _BEACON, _ACCESS = 0, 1, 2, 3


@dataclass(frozen=True)
class RadioConfig:
    tx_power_dbm: float = 20.0
    bitrate_bps: float = 6e6
    payload_bytes: int = 400
    overhead_bytes: int = 78
    beacon_rate_hz: float = 10.0
    carrier_freq_hz: float = 5.9e9
    bandwidth_hz: float = 10e6
    noise_figure_db: float = 6.0
    cca_threshold_dbm: float = -94.0
    sensitivity_dbm: float = -94.0
    sinr_threshold_db: float = 8.0
    slot_s: float = 13e-6
    aifs_s: float = 58e-6
    cw: int = 15
    interference_range_m: float = 2000.0
    record_range_m: float = 1000.0

    def __post_init__(self):
        for name in ("bitrate_bps", "beacon_rate_hz", "carrier_freq_hz", "bandwidth_hz",
                     "slot_s", "aifs_s", "interference_range_m", "record_range_m"):
            check_positive(getattr(self, name), name, ConfigError)
        if self.payload_bytes <= 0 or self.overhead_bytes < 0 or self.cw < 0:
            raise ConfigError("payload must be positive, overhead and cw non-negative")
        if self.cca_threshold_dbm <= self.noise_dbm:
            raise ConfigError(
                f"cca threshold {self.cca_threshold_dbm} dBm is not above the noise floor {self.noise_dbm:.1f} dBm"
            )

    @property
    def noise_dbm(self):
        return -174.0 + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db

    @property
    def frame_duration_s(self):
        return (self.payload_bytes + self.overhead_bytes) * 8.0 / self.bitrate_bps

    @property
    def frame_ns(self):
        return int(math.ceil(self.frame_duration_s * NS))

    @property
    def beacon_period_ns(self):
        return int(round(NS / self.beacon_rate_hz))


@dataclass
class SimResult:
    """Output of one simulation run.

    ``records`` and ``links`` are dicts of equal-length numpy columns.
    """

    records: dict
    links: dict
    transmissions: dict
    tracked_pairs: list
    stats: dict = field(default_factory=dict)


RECORD_COLUMNS = ("timestamp_ns", "tx", "rx", "distance_m", "link_class", "prx_dbm", "outcome")
LINK_COLUMNS = ("timestamp_ns", "a", "b", "distance_m", "link_class", "gain_db")
TX_COLUMNS = ("timestamp_ns", "tx", "generated_ns", "access_delay_ns")


class NetworkSimulator:
    """One run of the broadcast simulation.

    Parameters
    ----------
    scenario : ScenarioConfig
    radio : RadioConfig
    channel : ChannelConfig
    seed : int
        Master seed; mobility, MAC, shadowing and fading draw from
        independent child streams.
    record_mode : {"all", "tracked"}
        Record every (transmission, receiver) pair within
        ``radio.record_range_m`` or only tracked pairs.
    link_log_interval_s : float
        Sampling period of the link-state log.
    highway : Highway, optional
        Prebuilt traffic state (for hand-placed scenes); by default one is
        created from ``scenario``.
    beacon_phase_ns : dict, optional
        Fixed first-beacon offsets by vehicle id; other vehicles draw a
        uniform offset within the beacon period.
    """

    def __init__(self, scenario=None, radio=None, channel=None, seed=None,
                 record_mode="all", link_log_interval_s=0.5, highway=None, beacon_phase_ns=None):
        self.scn = scenario or ScenarioConfig()
        self.radio = radio or RadioConfig()
        self.channel = channel or ChannelConfig()
        self.seed = self.scn.seed if seed is None else int(seed)
        if record_mode not in ("all", "tracked"):
            raise ConfigError(f"record_mode must be 'all' or 'tracked', got {record_mode!r}")
        self.record_mode = record_mode
        self.link_log_interval_ns = int(round(check_positive(link_log_interval_s, "link_log_interval_s", ConfigError) * NS))

        ss = np.random.SeedSequence(self.seed)
        mob_ss, mac_ss, fade_ss, shadow_ss = ss.spawn(4)
        self.mac_rng = np.random.default_rng(mac_ss)
        self.fade_rng = np.random.default_rng(fade_ss)
        self.highway = highway if highway is not None else Highway(self.scn, np.random.default_rng(mob_ss))
        self.beacon_phase_ns = dict(beacon_phase_ns or {})
        self.shadow = ShadowField(int(shadow_ss.generate_state(1, np.uint64)[0]), self.channel.shadowing_mode)

        r = self.radio
        self.ptx_mw = 10.0 ** (r.tx_power_dbm / 10.0)
        self.noise_mw = 10.0 ** (r.noise_dbm / 10.0)
        self.cca_mw = 10.0 ** (r.cca_threshold_dbm / 10.0)
        self.sens_mw = 10.0 ** (r.sensitivity_dbm / 10.0)
        self.sinr_lin = 10.0 ** (r.sinr_threshold_db / 10.0)
        self.slot_ns = int(round(r.slot_s * NS))
        self.aifs_ns = int(round(r.aifs_s * NS))
        self.frame_ns = r.frame_ns
        self.period_ns = r.beacon_period_ns
        self.step_ns = int(round(self.scn.step_s * NS))
        self.sigma_by_class, self.dc_by_class = self.channel.class_arrays()

    # -- slot bookkeeping -------------------------------------------------
    def _alloc(self, cap):
        self.cap = cap
        self.vid = np.full(cap, -1, dtype=np.int64)
        self.xy = np.zeros((cap, 2))
        self.direction = np.zeros(cap, dtype=np.int64)
        self.pending = np.zeros(cap, dtype=bool)
        self.gen_ns = np.zeros(cap, dtype=np.int64)
        self.backoff = np.full(cap, -1, dtype=np.int64)
        self.busy = np.zeros(cap, dtype=bool)
        self.idle_ref = np.full(cap, -(10**18), dtype=np.int64)
        self.timer_ver = np.zeros(cap, dtype=np.int64)
        self.timer_on = np.zeros(cap, dtype=bool)
        self.transmitting = np.zeros(cap, dtype=bool)
        self.locked = np.full(cap, -1, dtype=np.int64)
        self.lock_p = np.zeros(cap)
        self.min_sinr = np.zeros(cap)
        self.total = np.zeros(cap)
        self.lin = np.zeros((cap, cap))
        self.dist = np.full((cap, cap), np.inf)
        self.cls = np.zeros((cap, cap), dtype=np.int8)
        self.gain = np.full((cap, cap), -np.inf)

    def _grow(self):
        old = {k: getattr(self, k) for k in (
            "vid", "xy", "direction", "pending", "gen_ns", "backoff", "busy", "idle_ref", "timer_ver",
            "timer_on", "transmitting", "locked", "lock_p", "min_sinr", "total", "lin", "dist", "cls", "gain")}
        n = self.cap
        self._alloc(2 * n)
        for k, v in old.items():
            new = getattr(self, k)
            if v.ndim == 2 and k != "xy":
                new[:n, :n] = v
            else:
                new[:n] = v
        for h in self.active_tx.values():
            p = np.zeros(self.cap)
            p[:n] = h["p"]
            h["p"] = p

    # -- event queue --------------------------------------------------------
    def _push(self, t, kind, vid, payload=None):
        self._seq += 1
        heapq.heappush(self.queue, (t, kind, vid, self._seq, payload))

    def run(self):
        scn = self.scn
        self.highway.run(scn.warmup_duration_s)
        scene = self.highway.scene()
        self.t0 = 0
        self.queue = []
        self._seq = 0
        self.active_tx = {}
        self.next_handle = 0
        self.slot_of = {}
        self._alloc(max(16, 2 * len(scene) + 16))
        self.rec = {k: [] for k in RECORD_COLUMNS}
        self.links = {k: [] for k in LINK_COLUMNS}
        self.txlog = {k: [] for k in TX_COLUMNS}
        self.stats = {"mac_drops": 0, "transmissions": 0}
        self.tracked = []
        self.tracked_log = []
        self._tracked_keys = set()

        self._sync_scene(scene, 0)
        self._refresh_tracked(scene, 0)
        self._update_links(0)
        end_ns = int(round(scn.duration_s * NS))
        self._push(self.step_ns, _MOBILITY, -1)
        while self.queue:
            t, kind, vid, _, payload = heapq.heappop(self.queue)
            if t > end_ns:
                break
            if kind == _MOBILITY:
                self._on_mobility(t)
                if t + self.step_ns <= end_ns:
                    self._push(t + self.step_ns, _MOBILITY, -1)
            elif kind == _TX_END:
                self._on_tx_end(t, payload)
            elif kind == _BEACON:
                self._on_beacon(t, vid)
            else:
                self._on_access(t, vid, payload)
        # frames still on the air at the end are dropped from the log
        for h in list(self.active_tx):
            self._discard(h)
        for pair in self.tracked:
            self.tracked_log.append((pair[0], pair[1], pair[2], end_ns))
        return self._result(end_ns)

    # -- mobility / channel updates ------------------------------------------
    def _sync_scene(self, scene, t):
        present = set(scene.ids.tolist())
        for vid in [v for v in self.slot_of if v not in present]:
            k = self.slot_of.pop(vid)
            self.vid[k] = -1
            self.pending[k] = False
            self.backoff[k] = -1
            self.busy[k] = False
            self.timer_on[k] = False
            self.timer_ver[k] += 1
            self.lin[k, :] = 0.0
            self.lin[:, k] = 0.0
            self.dist[k, :] = np.inf
            self.dist[:, k] = np.inf
            self.gain[k, :] = -np.inf
            self.gain[:, k] = -np.inf
            for h in self.active_tx.values():
                h["p"][k] = 0.0
            self.total[k] = 0.0
        for i, vid in enumerate(scene.ids.tolist()):
            k = self.slot_of.get(vid)
            if k is None:
                free = np.flatnonzero(self.vid < 0)
                if free.size == 0:
                    self._grow()
                    free = np.flatnonzero(self.vid < 0)
                k = int(free[0])
                self.slot_of[vid] = k
                self.vid[k] = vid
                self.idle_ref[k] = t
                self.busy[k] = self.total[k] >= self.cca_mw
                offset = self.beacon_phase_ns.get(vid)
                if offset is None:
                    offset = int(self.mac_rng.integers(0, self.period_ns))
                self._push(t + offset, _BEACON, vid)
            self.xy[k] = (scene.x[i], scene.y[i])
            self.direction[k] = scene.direction[i]

    def _update_links(self, t):
        slots = np.flatnonzero(self.vid >= 0)
        n = slots.size
        if n < 2:
            return
        xy = self.xy[slots]
        iu, ju = np.triu_indices(n, 1)
        d = np.hypot(xy[iu, 0] - xy[ju, 0], xy[iu, 1] - xy[ju, 1])
        near = d <= self.radio.interference_range_m
        iu, ju, d = iu[near], ju[near], d[near]
        si, sj = slots[iu], slots[ju]

        blocked = classify_axis_aligned(
            xy, self.scn.vehicle_length_m / 2, self.scn.vehicle_width_m / 2, np.column_stack([iu, ju])
        )
        cls = np.where(blocked, LinkClass.OLOS, LinkClass.LOS).astype(np.int8)

        keys = link_key(self.vid[si], self.vid[sj])
        prev = self.dist[si, sj]
        delta = np.where(np.isfinite(prev), np.abs(d - prev), 0.0)
        if self.channel.model == LOS_OLOS:
            x_db = self.shadow.update(keys, delta, self.sigma_by_class[cls], self.dc_by_class[cls])
            g = gain_matrix_db(self.channel, cls, d) + x_db
        else:
            g = nakagami_mean_gain_db(self.channel, d)

        self.dist[:] = np.inf
        self.gain[:] = -np.inf
        self.dist[si, sj] = d
        self.dist[sj, si] = d
        self.cls[si, sj] = cls
        self.cls[sj, si] = cls
        self.gain[si, sj] = g
        self.gain[sj, si] = g
        self.lin = self.ptx_mw * 10.0 ** (self.gain / 10.0)

        if t % self.link_log_interval_ns == 0:
            rec = d <= self.radio.record_range_m
            a, b = self.vid[si[rec]], self.vid[sj[rec]]
            self.links["timestamp_ns"].append(np.full(rec.sum(), t, dtype=np.int64))
            self.links["a"].append(a)
            self.links["b"].append(b)
            self.links["distance_m"].append(d[rec])
            self.links["link_class"].append(cls[rec])
            self.links["gain_db"].append(g[rec])

    def _on_mobility(self, t):
        hold = {int(self.vid[k]) for k in np.flatnonzero((self.transmitting | (self.locked >= 0)) & (self.vid >= 0))}
        scene = self.highway.step(self.scn.step_s, hold=hold)
        self._sync_scene(scene, t)
        self._refresh_tracked(scene, t)
        self._update_links(t)

    def _refresh_tracked(self, scene, t):
        want = self.scn.tracked_pairs
        if want == 0:
            return
        present = set(scene.ids.tolist())
        kept = []
        for pair in self.tracked:
            if pair[0] in present and pair[1] in present:
                kept.append(pair)
            else:
                self.tracked_log.append((pair[0], pair[1], pair[2], t))
        self.tracked = kept
        used = {v for p in self.tracked for v in p[:2]}
        horizon = self.scn.duration_s - t / NS
        for direction in (1, -1):
            have = sum(1 for p in self.tracked if p[3] == direction)
            need = want // 2 - have
            if need <= 0:
                continue
            new = select_tracked_pairs(scene, need, exclude=used, horizon_s=horizon, directions=(direction,))
            for fa, sb in new:
                self.tracked.append((fa, sb, t, direction))
                used.update((fa, sb))
        self._tracked_keys = {int(link_key(p[0], p[1])) for p in self.tracked}

    # -- MAC -------------------------------------------------------------------
    def _on_beacon(self, t, vid):
        k = self.slot_of.get(vid)
        if k is None:
            return
        self._push(t + self.period_ns, _BEACON, vid)
        if self.pending[k]:
            self.stats["mac_drops"] += 1
        self.pending[k] = True
        self.gen_ns[k] = t
        if self.timer_on[k]:
            return
        if self.busy[k]:
            if self.backoff[k] < 0:
                self.backoff[k] = self.mac_rng.integers(0, self.radio.cw + 1)
            return
        self.idle_ref[k] = t
        self._schedule_access(k)

    def _schedule_access(self, k):
        t_fire = int(self.idle_ref[k]) + self.aifs_ns + max(int(self.backoff[k]), 0) * self.slot_ns
        self.timer_ver[k] += 1
        self.timer_on[k] = True
        self._push(t_fire, _ACCESS, int(self.vid[k]), int(self.timer_ver[k]))

    def _freeze(self, k, t):
        if not self.timer_on[k]:
            if self.pending[k] and self.backoff[k] < 0:
                self.backoff[k] = self.mac_rng.integers(0, self.radio.cw + 1)
            return
        self.timer_on[k] = False
        self.timer_ver[k] += 1
        waited = t - int(self.idle_ref[k]) - self.aifs_ns
        if self.backoff[k] < 0:
            self.backoff[k] = self.mac_rng.integers(0, self.radio.cw + 1)
        elif waited > 0:
            self.backoff[k] = max(int(self.backoff[k]) - waited // self.slot_ns, 0)

    def _update_cs(self, t):
        now_busy = (self.transmitting | (self.total >= self.cca_mw)) & (self.vid >= 0)
        changed = np.flatnonzero(now_busy != self.busy)
        self.busy = now_busy
        for k in changed:
            if now_busy[k]:
                self._freeze(k, t)
            else:
                self.idle_ref[k] = t
                if self.pending[k] and not self.transmitting[k]:
                    self._schedule_access(k)

    def _on_access(self, t, vid, ver):
        k = self.slot_of.get(vid)
        if k is None or ver != self.timer_ver[k] or not self.timer_on[k]:
            return
        self.timer_on[k] = False
        if self.busy[k]:
            self._freeze(k, t)
            return
        self._start_tx(t, k)

    # -- PHY -------------------------------------------------------------------
    def _recompute_total(self):
        total = np.zeros(self.cap)
        for h in sorted(self.active_tx):
            total += self.active_tx[h]["p"]
        self.total = total

    def _start_tx(self, t, i):
        h = self.next_handle
        self.next_handle += 1
        self.stats["transmissions"] += 1
        self.pending[i] = False
        self.backoff[i] = -1
        vid_i = int(self.vid[i])
        self.txlog["timestamp_ns"].append(t)
        self.txlog["tx"].append(vid_i)
        self.txlog["generated_ns"].append(int(self.gen_ns[i]))
        self.txlog["access_delay_ns"].append(t - int(self.gen_ns[i]))

        p = self.lin[i].copy()
        if self.channel.model == NAKAGAMI:
            m = np.flatnonzero(p > 0)
            if m.size:
                mm = self.channel.nakagami.m_at(self.dist[i, m])
                p[m] = self.fade_rng.gamma(mm, p[m] / mm)
        p[i] = 0.0

        # half duplex: a reception in progress at the transmitter is lost
        if self.locked[i] >= 0:
            self._set_outcome(int(self.locked[i]), i, BUSY_DROP)
            self.locked[i] = -1
        self.transmitting[i] = True

        alive = self.vid >= 0
        alive[i] = False
        outcome = np.full(self.cap, _PENDING, dtype=np.int8)
        weak = (p < self.sens_mw) | (p < self.sinr_lin * self.noise_mw)
        outcome[alive & weak] = CHANNEL_LOSS
        # a receiver already locked onto an earlier frame loses this one to the overlap
        outcome[alive & ~weak & (self.locked >= 0)] = COLLISION
        outcome[alive & ~weak & self.transmitting] = BUSY_DROP
        lock = alive & (outcome == _PENDING)
        self.locked[lock] = h
        self.lock_p[lock] = p[lock]
        self.min_sinr[lock] = np.inf

        self.active_tx[h] = {"slot": i, "p": p, "t": t}
        self._recompute_total()
        self._update_sinr()

        rx = np.flatnonzero(alive & (self.dist[i] <= self.radio.record_range_m))
        if self.record_mode == "tracked":
            keys = link_key(np.full(rx.size, vid_i), self.vid[rx])
            rx = rx[np.isin(keys, np.fromiter(self._tracked_keys, dtype=np.uint64, count=len(self._tracked_keys)))]
        with np.errstate(divide="ignore"):
            prx = 10.0 * np.log10(p[rx])
        self.active_tx[h].update(
            rx=rx, out=outcome[rx].copy(), prx=prx, dist=self.dist[i, rx].copy(),
            cls=self.cls[i, rx].copy(), vid_rx=self.vid[rx].copy(), vid_tx=vid_i,
        )
        self._push(t + self.frame_ns, _TX_END, vid_i, h)
        self._update_cs(t)

    def _update_sinr(self):
        m = self.locked >= 0
        if m.any():
            interf = np.maximum(self.total[m] - self.lock_p[m], 0.0)
            sinr = self.lock_p[m] / (self.noise_mw + interf)
            self.min_sinr[m] = np.minimum(self.min_sinr[m], sinr)

    def _set_outcome(self, h, slot, outcome):
        rec = self.active_tx.get(h)
        if rec is not None and "rx" in rec:
            self._set_outcome_rec(rec, slot, outcome)

    def _on_tx_end(self, t, h):
        rec = self.active_tx.pop(h)
        i = rec["slot"]
        self.transmitting[i] = False
        mine = np.flatnonzero(self.locked == h)
        ok = self.min_sinr[mine] >= self.sinr_lin
        for slot, good in zip(mine.tolist(), ok.tolist()):
            self._set_outcome_rec(rec, slot, RECEIVED if good else COLLISION)
        self.locked[mine] = -1
        self._recompute_total()
        self._emit(rec)
        self._update_cs(t)

    def _set_outcome_rec(self, rec, slot, outcome):
        idx = np.flatnonzero(rec["rx"] == slot)
        if idx.size:
            rec["out"][idx] = outcome

    def _emit(self, rec):
        n = rec["rx"].size
        if n == 0:
            return
        self.rec["timestamp_ns"].append(np.full(n, rec["t"], dtype=np.int64))
        self.rec["tx"].append(np.full(n, rec["vid_tx"], dtype=np.int64))
        self.rec["rx"].append(rec["vid_rx"])
        self.rec["distance_m"].append(rec["dist"])
        self.rec["link_class"].append(rec["cls"])
        self.rec["prx_dbm"].append(rec["prx"])
        self.rec["outcome"].append(rec["out"])

    def _discard(self, h):
        rec = self.active_tx.pop(h)
        self.locked[self.locked == h] = -1
        self.transmitting[rec["slot"]] = False

    # -- results ---------------------------------------------------------------
    def _result(self, end_ns):
        def cat(cols, dtypes):
            out = {}
            for k, parts in cols.items():
                out[k] = np.concatenate(parts).astype(dtypes[k]) if parts else np.empty(0, dtypes[k])
            return out

        rec_types = dict(timestamp_ns=np.int64, tx=np.int64, rx=np.int64, distance_m=float,
                         link_class=np.int8, prx_dbm=float, outcome=np.int8)
        link_types = dict(timestamp_ns=np.int64, a=np.int64, b=np.int64, distance_m=float,
                          link_class=np.int8, gain_db=float)
        records = cat(self.rec, rec_types)
        assert not np.any(records["outcome"] == _PENDING)
        links = cat(self.links, link_types)
        tx = {k: np.asarray(v, dtype=np.int64) for k, v in self.txlog.items()}
        stats = dict(self.stats)
        stats["duration_s"] = self.scn.duration_s
        stats["mean_access_delay_s"] = float(tx["access_delay_ns"].mean() / NS) if tx["tx"].size else math.nan
        stats["vehicles_seen"] = int(self.highway.next_id)
        stats["airtime_per_second"] = stats["transmissions"] * self.frame_ns / max(end_ns, 1)
        tracked = [
            dict(fast=int(a), slow=int(b), start_ns=int(s), end_ns=int(e))
            for a, b, s, e in self.tracked_log
        ]
        return SimResult(records, links, tx, tracked, stats)


def simulate(scenario=None, radio=None, channel=None, seed=None, **kw):
    """Run one simulation and return its :class:`SimResult`."""
    return NetworkSimulator(scenario, radio, channel, seed, **kw).run()

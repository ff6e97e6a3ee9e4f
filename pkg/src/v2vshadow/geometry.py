"""Rectangle-based LOS / OLOS / NLOS link classification.

Vehicles and buildings are rectangles. A link is LOS when the straight line
between the two antennas touches no other rectangle, OLOS when it crosses
only vehicles, and NLOS when it crosses a building. Building-blocked links
between streets that do not intersect are NLOS_PARALLEL; their interference
is ignored downstream.
"""
import enum
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive
from .exceptions import ConfigError, ModelDomainError
from .propagation import NlosGeometry


class LinkClass(enum.IntEnum):
    LOS = 0
    OLOS = 1
    NLOS = 2
    NLOS_PARALLEL = 3


VEHICLE = "VEHICLE"
BUILDING = "BUILDING"


@dataclass(frozen=True)
class Rect:
    """Oriented rectangle. ``length`` runs along ``heading`` (radians)."""

    center: tuple
    length: float
    width: float
    heading: float = 0.0
    height: float | None = None
    kind: str = VEHICLE

    def __post_init__(self):
        check_positive(self.length, "length")
        check_positive(self.width, "width")
        if self.height is not None:
            check_positive(self.height, "height")
        if self.kind not in (VEHICLE, BUILDING):
            raise ModelDomainError(f"unknown rectangle kind {self.kind!r}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def to_local(self, p):
        c, s = math.cos(self.heading), math.sin(self.heading)
        dx, dy = p[0] - self.center[0], p[1] - self.center[1]
        return (c * dx + s * dy, -s * dx + c * dy)

    def contains(self, p):
        u, v = self.to_local(p)
        return abs(u) <= self.length / 2 and abs(v) <= self.width / 2

    def corners(self):
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = self.length / 2, self.width / 2
        return [
            (self.center[0] + c * u - s * v, self.center[1] + s * u + c * v)
            for u, v in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
        ]


def _clip_interval(a, b, rect):
    """Parameter interval ``[t0, t1]`` of the line a + t(b - a) inside ``rect``.

    Returns ``None`` when the line misses the closed rectangle.
    """
    ua, va = rect.to_local(a)
    ub, vb = rect.to_local(b)
    t0, t1 = -math.inf, math.inf
    for p0, dp, half in ((ua, ub - ua, rect.length / 2), (va, vb - va, rect.width / 2)):
        if dp == 0.0:
            if abs(p0) > half:
                return None
            continue
        lo = (-half - p0) / dp
        hi = (half - p0) / dp
        if lo > hi:
            lo, hi = hi, lo
        t0, t1 = max(t0, lo), min(t1, hi)
        if t0 > t1:
            return None
    return t0, t1


def segment_intersects_rect(a, b, rect):
    """True iff the open segment (a, b) meets the closed rectangle.

    Grazing contact with an edge or a corner counts as an intersection.
    """
    if a[0] == b[0] and a[1] == b[1]:
        raise ModelDomainError("segment endpoints coincide")
    span = _clip_interval(a, b, rect)
    if span is None:
        return False
    t0, t1 = span
    return t1 > 0.0 and t0 < 1.0


def segments_intersect(p1, p2, q1, q2):
    """Closed-segment intersection test (collinear overlap included)."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_segment(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_segment(p1, p2, q1))
        or (o2 == 0 and on_segment(p1, p2, q2))
        or (o3 == 0 and on_segment(q1, q2, p1))
        or (o4 == 0 and on_segment(q1, q2, p2))
    )


@dataclass(frozen=True)
class Road:
    """Straight street given by its centerline and total width (m)."""

    start: tuple
    end: tuple
    width: float
    name: str = ""

    def __post_init__(self):
        check_positive(self.width, "width", ConfigError)
        if tuple(self.start) == tuple(self.end):
            raise ConfigError(f"road {self.name!r} has zero length")
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        object.__setattr__(self, "end", (float(self.end[0]), float(self.end[1])))

    @property
    def direction(self):
        dx, dy = self.end[0] - self.start[0], self.end[1] - self.start[1]
        n = math.hypot(dx, dy)
        return dx / n, dy / n

    def offsets(self, p):
        """Along-road and signed lateral coordinates of ``p``."""
        ux, uy = self.direction
        dx, dy = p[0] - self.start[0], p[1] - self.start[1]
        return dx * ux + dy * uy, -dx * uy + dy * ux

    @property
    def length(self):
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    def contains(self, p):
        along, lateral = self.offsets(p)
        return -1e-9 <= along <= self.length + 1e-9 and abs(lateral) <= self.width / 2

    def intersects(self, other):
        return segments_intersect(self.start, self.end, other.start, other.end)


def centerline_intersection(r1, r2):
    """Crossing point of two road centerlines, or ``None`` if they are parallel."""
    (x1, y1), (x2, y2) = r1.start, r1.end
    (x3, y3), (x4, y4) = r2.start, r2.end
    den = (x1 - x2) * (y3 - y4) - (y1 - y2) * (x3 - x4)
    if den == 0:
        return None
    t = ((x1 - x3) * (y3 - y4) - (y1 - y3) * (x3 - x4)) / den
    return (x1 + t * (x2 - x1), y1 + t * (y2 - y1))


def road_of(point, roads):
    """First road containing ``point`` (``None`` if off-road)."""
    for road in roads:
        if road.contains(point):
            return road
    return None


@dataclass
class VehicleBody:
    """Vehicle state plus its footprint and antenna position."""

    id: int
    footprint: Rect
    antenna: tuple
    lane: int = 0
    direction: int = 1
    position: float = 0.0
    speed: float = 0.0
    antenna_height: float = 1.47

    @classmethod
    def at(cls, vid, x, y, heading=0.0, length=4.8, width=1.8, height=1.47, **kw):
        rect = Rect((x, y), length, width, heading, height, VEHICLE)
        return cls(vid, rect, (float(x), float(y)), antenna_height=height, **kw)


def _blocking_kinds(tx, rx, obstacles, fresnel_wavelength=None, clearance_fraction=0.6):
    a, b = tx.antenna, rx.antenna
    kinds = set()
    for obs in obstacles:
        if obs is tx.footprint or obs is rx.footprint or obs == tx.footprint or obs == rx.footprint:
            continue
        if not segment_intersects_rect(a, b, obs):
            continue
        if fresnel_wavelength is not None and obs.kind == VEHICLE:
            if obs.height is None:
                raise ConfigError("Fresnel refinement needs obstacle heights")
            tx3 = (a[0], a[1], tx.antenna_height)
            rx3 = (b[0], b[1], rx.antenna_height)
            if fresnel_clearance(tx3, rx3, obs, fresnel_wavelength, clearance_fraction):
                continue
        kinds.add(obs.kind)
    return kinds


def classify_link(tx, rx, obstacles, roads=(), fresnel_wavelength=None, clearance_fraction=0.6):
    """Propagation class of the link between two :class:`VehicleBody` objects.

    ``obstacles`` may include the TX and RX footprints; they are skipped.
    Buildings dominate vehicles. A building-blocked link is NLOS when the
    streets of the two vehicles intersect (or coincide, or are unknown) and
    NLOS_PARALLEL otherwise. Passing ``fresnel_wavelength`` enables the
    Fresnel-zone check for vehicle obstacles with known heights.
    """
    if tx is rx or tx.id == rx.id:
        raise ModelDomainError("a link needs two distinct vehicles")
    kinds = _blocking_kinds(tx, rx, obstacles, fresnel_wavelength, clearance_fraction)
    if BUILDING in kinds:
        if streets_intersect(tx.antenna, rx.antenna, roads):
            return LinkClass.NLOS
        return LinkClass.NLOS_PARALLEL
    if VEHICLE in kinds:
        return LinkClass.OLOS
    return LinkClass.LOS


def streets_intersect(p_tx, p_rx, roads):
    rt, rr = road_of(p_tx, roads), road_of(p_rx, roads)
    if rt is None or rr is None or rt is rr:
        return True
    return rt.intersects(rr)


def nlos_geometry(p_tx, p_rx, roads):
    """Corner geometry (dr, dt, wr, xt) for a TX and RX on intersecting streets.

    ``xt`` is the lateral distance from the TX to the wall of its own street
    on the side facing the RX street; walls are taken at the street edges.
    """
    rt, rr = road_of(p_tx, roads), road_of(p_rx, roads)
    if rt is None or rr is None:
        raise ConfigError("TX or RX is not on a declared road")
    center = centerline_intersection(rt, rr)
    if center is None or not rt.intersects(rr):
        raise ConfigError("TX and RX streets do not intersect")
    dt = math.dist(p_tx, center)
    dr = math.dist(p_rx, center)
    _, lat_tx = rt.offsets(p_tx)
    _, lat_rx_side = rt.offsets(p_rx)
    side = 1.0 if lat_rx_side >= 0 else -1.0
    xt = rt.width / 2 - side * lat_tx
    return NlosGeometry(dr_m=dr, dt_m=dt, wr_m=rr.width, xt_m=max(xt, 1e-3))


def fresnel_radius(wavelength, d1, d2):
    """First Fresnel zone radius at distances d1, d2 from the two ends."""
    return math.sqrt(wavelength * d1 * d2 / (d1 + d2))


def fresnel_clearance(tx, rx, obstacle, wavelength, clearance_fraction=0.6):
    """True when ``obstacle`` keeps clear of the Fresnel zone between 3-D antennas.

    The obstacle is a box from the ground to ``obstacle.height``. Only the
    part of the direct path that passes over the footprint is checked; the
    zone counts as obstructed when the obstacle top comes within
    ``clearance_fraction * r1`` of the direct ray there. Use
    ``clearance_fraction=1.0`` to require the full first zone to be clear.
    """
    if obstacle.height is None:
        raise ConfigError("obstacle height is required for the Fresnel check")
    if len(tx) != 3 or len(rx) != 3:
        raise ConfigError("antenna positions must include heights")
    a, b = (tx[0], tx[1]), (rx[0], rx[1])
    dist = math.dist(a, b)
    if dist == 0:
        raise ModelDomainError("antennas coincide")
    span = _clip_interval(a, b, obstacle)
    if span is None:
        return True
    t0, t1 = max(span[0], 0.0), min(span[1], 1.0)
    if t0 > t1:
        return True
    ts = np.linspace(t0, t1, 65)
    ts = np.union1d(ts, [0.5]) if t0 <= 0.5 <= t1 else ts
    ray = tx[2] + ts * (rx[2] - tx[2])
    d1 = ts * dist
    d2 = dist - d1
    r1 = np.sqrt(wavelength * d1 * d2 / dist)
    return bool(np.all(obstacle.height < ray - clearance_fraction * r1))


def classify_axis_aligned(xy, half_len, half_wid, pairs, max_candidates=None):
    """Vectorized LOS/OLOS test for links among axis-aligned vehicle footprints.

    Parameters
    ----------
    xy : (n, 2) array
        Antenna positions, which are also the footprint centers.
    half_len, half_wid : float or (n,) array
        Half extents of each footprint along x and y.
    pairs : (p, 2) int array
        Links to classify, as row indices into ``xy``.

    Returns
    -------
    blocked : (p,) bool array
        True where the segment between the pair touches another footprint.
    """
    xy = np.asarray(xy, dtype=float)
    n = xy.shape[0]
    pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    hl = np.broadcast_to(np.asarray(half_len, dtype=float), (n,))
    hw = np.broadcast_to(np.asarray(half_wid, dtype=float), (n,))
    blocked = np.zeros(len(pairs), dtype=bool)
    if n < 3 or len(pairs) == 0:
        return blocked

    order = np.argsort(xy[:, 0], kind="stable")
    xs = xy[order, 0]
    reach = float(hl.max())
    i, j = pairs[:, 0], pairs[:, 1]
    xmin = np.minimum(xy[i, 0], xy[j, 0]) - reach
    xmax = np.maximum(xy[i, 0], xy[j, 0]) + reach
    lo = np.searchsorted(xs, xmin, side="left")
    hi = np.searchsorted(xs, xmax, side="right")
    counts = hi - lo

    chunk = 2_000_000
    start = 0
    cum = np.cumsum(counts)
    while start < len(pairs):
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + chunk, side="right"))
        stop = max(stop, start + 1)
        sel = np.arange(start, stop)
        c = counts[sel]
        pair_idx = np.repeat(sel, c)
        offs = np.arange(c.sum()) - np.repeat(np.cumsum(c) - c, c)
        obs = order[np.repeat(lo[sel], c) + offs]
        keep = (obs != i[pair_idx]) & (obs != j[pair_idx])
        pair_idx, obs = pair_idx[keep], obs[keep]
        hit = _slab_hits(xy[i[pair_idx]], xy[j[pair_idx]], xy[obs], hl[obs], hw[obs])
        np.logical_or.at(blocked, pair_idx[hit], True)
        start = stop
    return blocked


def _slab_hits(a, b, c, hl, hw):
    """Open segment a->b against closed axis-aligned boxes centered at c."""
    ok = np.ones(len(a), dtype=bool)
    t0 = np.full(len(a), -np.inf)
    t1 = np.full(len(a), np.inf)
    for k, half in ((0, hl), (1, hw)):
        p0 = a[:, k] - c[:, k]
        dp = b[:, k] - a[:, k]
        par = dp == 0.0
        ok &= ~(par & (np.abs(p0) > half))
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = (-half - p0) / dp
            hi = (half - p0) / dp
        t0 = np.maximum(t0, np.where(par, -np.inf, np.minimum(lo, hi)))
        t1 = np.minimum(t1, np.where(par, np.inf, np.maximum(lo, hi)))
    return ok & (t0 <= t1) & (t1 > 0.0) & (t0 < 1.0)

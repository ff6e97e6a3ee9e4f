"""Multi-lane bidirectional highway with Poisson arrivals and constant speeds."""
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive
from .exceptions import ConfigError
from .geometry import VehicleBody

#: Mean inter-arrival presets mapped to the densities (vehicles/km, both
#: directions) they are meant to produce.
DENSITY_PROFILES = {"1s": 100.0, "2s": 60.0, "3s": 40.0}


@dataclass(frozen=True)
class ScenarioConfig:
    road_length_m: float = 10_000.0
    lanes_per_direction: int = 2
    # index 0 is the lane next to the median
    lane_speed_means: tuple = (30.0, 23.0)
    speed_std: float = 1.0
    density_per_km: float = 40.0
    duration_s: float = 100.0
    step_s: float = 0.1
    seed: int = 1
    lane_width_m: float = 3.5
    median_m: float = 1.0
    vehicle_length_m: float = 4.8
    vehicle_width_m: float = 1.8
    antenna_height_m: float = 1.47
    min_headway_s: float = 1.0
    min_gap_m: float = 7.0
    warmup_s: float | None = None
    tracked_pairs: int = 6

    def __post_init__(self):
        for name in (
            "road_length_m", "speed_std", "density_per_km", "duration_s", "step_s",
            "lane_width_m", "vehicle_length_m", "vehicle_width_m", "antenna_height_m",
            "min_headway_s", "min_gap_m",
        ):
            check_positive(getattr(self, name), name, ConfigError)
        if self.median_m < 0:
            raise ConfigError("median_m must be >= 0")
        if self.step_s > 0.1 + 1e-12:
            raise ConfigError("step_s must not exceed 0.1 s")
        if self.lanes_per_direction < 1 or len(self.lane_speed_means) != self.lanes_per_direction:
            raise ConfigError("lane_speed_means needs one entry per lane")
        if any(v <= 0 for v in self.lane_speed_means):
            raise ConfigError("lane speeds must be positive")
        if self.warmup_s is not None and self.warmup_s < 0:
            raise ConfigError("warmup_s must be >= 0")
        if self.tracked_pairs < 0 or self.tracked_pairs % 2:
            raise ConfigError("tracked_pairs must be a non-negative even number")
        object.__setattr__(self, "lane_speed_means", tuple(float(v) for v in self.lane_speed_means))

    @property
    def n_lanes(self):
        return 2 * self.lanes_per_direction

    @property
    def arrival_rate_per_direction(self):
        """Arrivals per second at each entry that sustain the target density.

        Arrivals split evenly over the lanes of a direction, so the density
        of a direction is ``rate / n * sum(1 / v_lane)``.
        """
        per_m = self.density_per_km / 1000.0 / 2.0
        n = self.lanes_per_direction
        return per_m * n / sum(1.0 / v for v in self.lane_speed_means)

    @property
    def warmup_duration_s(self):
        if self.warmup_s is not None:
            return self.warmup_s
        return self.road_length_m / min(self.lane_speed_means)

    def lane_direction(self, lane):
        return 1 if lane < self.lanes_per_direction else -1

    def lane_speed_mean(self, lane):
        return self.lane_speed_means[lane % self.lanes_per_direction]

    def lane_y(self, lane):
        k = lane % self.lanes_per_direction
        off = self.median_m / 2 + self.lane_width_m * (k + 0.5)
        # direction +1 drives on the negative-y carriageway
        return -off if self.lane_direction(lane) == 1 else off


def profile_density(name):
    try:
        return DENSITY_PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown density profile {name!r}; choose from {sorted(DENSITY_PROFILES)}") from None


@dataclass
class Scene:
    """Snapshot of all vehicles on the road at time ``t`` (s)."""

    t: float
    ids: np.ndarray
    lane: np.ndarray
    direction: np.ndarray
    s: np.ndarray
    speed: np.ndarray
    x: np.ndarray
    y: np.ndarray
    cfg: ScenarioConfig = field(repr=False)

    def __len__(self):
        return self.ids.size

    @property
    def xy(self):
        return np.column_stack([self.x, self.y])

    def bodies(self):
        c = self.cfg
        out = []
        for k in range(len(self)):
            heading = 0.0 if self.direction[k] == 1 else math.pi
            out.append(
                VehicleBody.at(
                    int(self.ids[k]), float(self.x[k]), float(self.y[k]), heading,
                    c.vehicle_length_m, c.vehicle_width_m, c.antenna_height_m,
                    lane=int(self.lane[k]), direction=int(self.direction[k]),
                    position=float(self.s[k]), speed=float(self.speed[k]),
                )
            )
        return out


class Highway:
    """Traffic state of the highway; advance it with :meth:`step`.

    Parameters
    ----------
    cfg : ScenarioConfig
    rng : numpy.random.Generator, optional
        Defaults to a generator seeded from ``cfg.seed``.
    spawn : bool
        Draw Poisson arrivals. Disable it to build hand-placed scenes with
        :meth:`add_vehicle`.
    """

    def __init__(self, cfg, rng=None, spawn=True):
        self.cfg = cfg
        self.spawn = spawn
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.t = 0.0
        self.next_id = 0
        self.ids = np.empty(0, dtype=np.int64)
        self.lane = np.empty(0, dtype=np.int64)
        self.direction = np.empty(0, dtype=np.int64)
        self.s = np.empty(0)
        self.speed = np.empty(0)
        self.queues = [deque() for _ in range(cfg.n_lanes)]
        self.tails = [-1] * cfg.n_lanes
        self.arrivals = 0
        self.departed = []

    def _draw_speed(self, lane):
        c = self.cfg
        for _ in range(100):
            v = self.rng.normal(c.lane_speed_mean(lane), c.speed_std)
            if v > 1.0:
                return v
        return c.lane_speed_mean(lane)

    def spawn_arrivals(self, dt):
        """Draw Poisson arrivals at both entries and release queued vehicles.

        Returns the ids of the vehicles that entered the road.
        """
        check_positive(dt, "dt")
        if not self.spawn:
            return []
        c = self.cfg
        rate = c.arrival_rate_per_direction
        for direction in (1, -1):
            n = self.rng.poisson(rate * dt)
            lanes = [k if direction == 1 else k + c.lanes_per_direction for k in range(c.lanes_per_direction)]
            for _ in range(n):
                lane = lanes[self.rng.integers(len(lanes))]
                self.queues[lane].append(self._draw_speed(lane))
                self.arrivals += 1
        new_ids = []
        for lane, queue in enumerate(self.queues):
            if not queue:
                continue
            v = queue[0]
            leader = self._index_of(self.tails[lane])
            if leader is not None:
                gap = self.s[leader]
                if gap < max(c.min_gap_m, c.min_headway_s * v):
                    continue
                v = self._cap_speed(lane, v, gap, self.speed[leader])
            queue.popleft()
            new_ids.append(self._add(lane, v))
        return new_ids

    def _cap_speed(self, lane, v, gap, v_lead):
        """Keep a follower from reaching its leader before the leader exits."""
        c = self.cfg
        remaining = c.road_length_m - gap
        if remaining <= 0 or v <= v_lead:
            return v
        bound = v_lead * (1.0 + (gap - c.min_gap_m) / remaining)
        return min(v, bound)

    def _index_of(self, vid):
        if vid < 0:
            return None
        k = np.searchsorted(self.ids, vid)
        if k < self.ids.size and self.ids[k] == vid:
            return int(k)
        return None

    def _add(self, lane, v, s=0.0):
        vid = self.next_id
        self.next_id += 1
        self.ids = np.append(self.ids, vid)
        self.lane = np.append(self.lane, lane)
        self.direction = np.append(self.direction, self.cfg.lane_direction(lane))
        self.s = np.append(self.s, float(s))
        self.speed = np.append(self.speed, v)
        tail = self._index_of(self.tails[lane])
        if tail is None or s <= self.s[tail]:
            self.tails[lane] = vid
        return vid

    def add_vehicle(self, lane, position_m, speed):
        """Place a vehicle directly (``position_m`` along its driving direction)."""
        if not 0 <= lane < self.cfg.n_lanes:
            raise ConfigError(f"lane must be in [0, {self.cfg.n_lanes})")
        if not 0 <= position_m <= self.cfg.road_length_m:
            raise ConfigError("position outside the road")
        check_positive(speed, "speed", ConfigError)
        return self._add(lane, float(speed), position_m)

    def step(self, dt, hold=()):
        """Advance by ``dt`` seconds and return the new :class:`Scene`.

        Vehicles past the road end leave, except ids in ``hold`` which stay
        one more step (used while they still have a frame on the air).
        """
        check_positive(dt, "dt")
        self.s = self.s + self.speed * dt
        self.t += dt
        out = self.s > self.cfg.road_length_m
        if hold and out.any():
            out &= ~np.isin(self.ids, np.fromiter(hold, dtype=np.int64))
        if out.any():
            self.departed.extend(self.ids[out].tolist())
            keep = ~out
            self.ids, self.lane, self.direction = self.ids[keep], self.lane[keep], self.direction[keep]
            self.s, self.speed = self.s[keep], self.speed[keep]
        self.spawn_arrivals(dt)
        return self.scene()

    advance_scene = step

    def run(self, duration, dt=None):
        dt = dt or self.cfg.step_s
        n = int(round(duration / dt))
        for _ in range(n):
            self.step(dt)
        return self.scene()

    def scene(self):
        c = self.cfg
        x = np.where(self.direction == 1, self.s, c.road_length_m - self.s)
        y = np.array([c.lane_y(int(k)) for k in self.lane]) if self.lane.size else np.empty(0)
        return Scene(
            self.t, self.ids.copy(), self.lane.copy(), self.direction.copy(),
            self.s.copy(), self.speed.copy(), x, y, c,
        )

    def density_per_km(self):
        return 1000.0 * self.ids.size / self.cfg.road_length_m


def select_tracked_pairs(scene, count, exclude=(), horizon_s=math.inf, directions=(1, -1)):
    """Pick same-direction pairs in different lanes where the faster car overtakes.

    For each direction, candidates are (fast, slow) pairs with the faster
    vehicle behind, sorted by the time until it passes the slower one; pairs
    whose overtaking would happen after either leaves the road (or after
    ``horizon_s``) are not eligible. Vehicles are used at most once.
    Returns a list of ``(fast_id, slow_id)``.
    """
    cfg = scene.cfg
    per_dir = count // len(directions)
    used = set(exclude)
    picked = []
    for direction in directions:
        idx = np.flatnonzero(scene.direction == direction)
        cands = []
        for a in idx:
            for b in idx:
                if scene.lane[a] == scene.lane[b] or scene.speed[a] <= scene.speed[b]:
                    continue
                gap = scene.s[b] - scene.s[a]
                if gap <= 0:
                    continue
                tau = gap / (scene.speed[a] - scene.speed[b])
                if tau > horizon_s or scene.s[b] + scene.speed[b] * tau > cfg.road_length_m:
                    continue
                cands.append((tau, int(scene.ids[a]), int(scene.ids[b])))
        cands.sort()
        n = 0
        for _, fa, sb in cands:
            if n >= per_dir:
                break
            if fa in used or sb in used:
                continue
            used.update((fa, sb))
            picked.append((fa, sb))
            n += 1
    return picked

import numpy as np
import pytest

from v2vshadow.exceptions import ConfigError
from v2vshadow.mobility import DENSITY_PROFILES, Highway, ScenarioConfig, profile_density, select_tracked_pairs


def density_for_rate(rate, cfg=ScenarioConfig()):
    """Density whose calibrated arrival rate per entry equals ``rate``."""
    return rate * 2000.0 * sum(1.0 / v for v in cfg.lane_speed_means) / cfg.lanes_per_direction


def lane_order_ok(hw):
    for lane in range(hw.cfg.n_lanes):
        m = hw.lane == lane
        ids, s = hw.ids[m], hw.s[m]
        order = np.argsort(ids)
        # earlier entrants are further down the road
        if np.any(np.diff(s[order]) >= 0):
            return False
    return True


class TestConfig:
    def test_profiles(self):
        assert DENSITY_PROFILES == {"1s": 100.0, "2s": 60.0, "3s": 40.0}
        assert profile_density("2s") == 60.0
        with pytest.raises(ConfigError):
            profile_density("4s")

    @pytest.mark.parametrize("kw", [dict(step_s=0.2), dict(road_length_m=0), dict(lane_speed_means=(30.0,)),
                                    dict(density_per_km=-1), dict(tracked_pairs=3)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            ScenarioConfig(**kw)

    def test_rate_calibration(self):
        cfg = ScenarioConfig(density_per_km=40.0)
        per_direction = cfg.arrival_rate_per_direction / 2 * sum(1 / v for v in cfg.lane_speed_means)
        assert 2 * per_direction * 1000 == pytest.approx(40.0)

    def test_lane_geometry(self):
        cfg = ScenarioConfig()
        assert [cfg.lane_direction(k) for k in range(4)] == [1, 1, -1, -1]
        assert cfg.lane_y(0) == -cfg.lane_y(2)
        assert cfg.lane_speed_mean(0) == cfg.lane_speed_mean(2) == 30.0


class TestArrivals:
    def test_poisson_count(self):
        cfg = ScenarioConfig(density_per_km=density_for_rate(0.5), road_length_m=200.0)
        hw = Highway(cfg, np.random.default_rng(5))
        for _ in range(100_000):
            hw.spawn_arrivals(0.1)
        # two entries, each 10^4 s at 0.5 arrivals/s
        assert abs(hw.arrivals - 10_000) < 3 * np.sqrt(10_000)

    def test_spawning_disabled(self):
        hw = Highway(ScenarioConfig(), spawn=False)
        hw.run(100.0)
        assert hw.arrivals == 0 and len(hw.scene()) == 0

    @pytest.mark.parametrize("target", [40.0, 60.0, 100.0])
    def test_steady_state_density(self, target):
        cfg = ScenarioConfig(density_per_km=target, road_length_m=3000.0, seed=11)
        hw = Highway(cfg)
        hw.run(200.0, dt=0.1)
        samples = []
        for _ in range(300):
            hw.run(2.0, dt=0.1)
            samples.append(hw.density_per_km())
        assert np.mean(samples) == pytest.approx(target, rel=0.10)


class TestKinematics:
    def test_constant_speed_step(self):
        hw = Highway(ScenarioConfig(), spawn=False)
        vid = hw.add_vehicle(0, 100.0, 25.0)
        scene = hw.step(0.1)
        assert scene.s[scene.ids == vid][0] == pytest.approx(102.5)

    def test_opposite_direction_moves_toward_smaller_x(self):
        hw = Highway(ScenarioConfig(), spawn=False)
        hw.add_vehicle(2, 100.0, 25.0)
        x0 = hw.scene().x[0]
        assert hw.step(0.1).x[0] == pytest.approx(x0 - 2.5)

    def test_removed_at_road_end(self):
        hw = Highway(ScenarioConfig(road_length_m=1000.0), spawn=False)
        vid = hw.add_vehicle(1, 999.0, 25.0)
        scene = hw.step(0.1)
        assert vid not in scene.ids and hw.departed == [vid]

    def test_add_vehicle_validation(self):
        hw = Highway(ScenarioConfig(), spawn=False)
        with pytest.raises(ConfigError):
            hw.add_vehicle(4, 0.0, 20.0)
        with pytest.raises(ConfigError):
            hw.add_vehicle(0, -1.0, 20.0)
        with pytest.raises(ConfigError):
            hw.add_vehicle(0, 0.0, 0.0)

    def test_no_same_lane_overtaking_over_full_run(self):
        cfg = ScenarioConfig(density_per_km=100.0, road_length_m=2000.0, seed=3)
        hw = Highway(cfg)
        seen = set()
        for _ in range(3000):
            hw.step(0.1)
            assert lane_order_ok(hw)
            seen.update(hw.ids.tolist())
        # ids are handed out once, in order of entry
        assert sorted(seen) == list(range(min(seen), max(seen) + 1))

    def test_speeds_fixed_while_on_road(self):
        hw = Highway(ScenarioConfig(density_per_km=60.0, road_length_m=2000.0))
        hw.run(50.0)
        before = dict(zip(hw.ids.tolist(), hw.speed.tolist()))
        hw.run(20.0)
        after = dict(zip(hw.ids.tolist(), hw.speed.tolist()))
        assert all(after[k] == v for k, v in before.items() if k in after)

    def test_deterministic_replay(self):
        cfg = ScenarioConfig(density_per_km=60.0, road_length_m=2000.0, seed=21)
        a, b = Highway(cfg).run(60.0), Highway(cfg).run(60.0)
        assert np.array_equal(a.ids, b.ids) and np.array_equal(a.s, b.s)


class TestTrackedPairs:
    def test_pairs_overtake_in_same_direction(self):
        cfg = ScenarioConfig(density_per_km=40.0, road_length_m=3000.0, seed=2)
        hw = Highway(cfg)
        scene = hw.run(150.0)
        pairs = select_tracked_pairs(scene, 6)
        assert len(pairs) == 6
        pos = {int(i): k for k, i in enumerate(scene.ids)}
        flat = [v for p in pairs for v in p]
        assert len(set(flat)) == len(flat)
        dirs = []
        for fast, slow in pairs:
            f, s = pos[fast], pos[slow]
            assert scene.direction[f] == scene.direction[s]
            assert scene.lane[f] != scene.lane[s]
            assert scene.speed[f] > scene.speed[s] and scene.s[f] < scene.s[s]
            dirs.append(int(scene.direction[f]))
        assert dirs.count(1) == dirs.count(-1) == 3

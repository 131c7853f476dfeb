import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from swarmfield import env
from swarmfield.env import (EnvConfig, EpisodeFinishedError, PlacementError, check_path_constraints,
                            compute_reward, init_instance, neighbor_sets, regenerate_hazards, step,
                            threat_penalty, ConstraintStatus, UavState)
from conftest import make_world


def _snapshot(world):
    return ([u.p.tolist() for u in world.uavs], [u.p_end.tolist() for u in world.uavs],
            [(h.p.tolist(), h.radius) for h in world.hazards])


def test_same_seed_same_world():
    cfg = EnvConfig(n_uavs=6)
    assert _snapshot(init_instance(cfg, 7)) == _snapshot(init_instance(cfg, 7))
    assert _snapshot(init_instance(cfg, 7)) != _snapshot(init_instance(cfg, 8))


def test_six_uavs_four_destinations():
    world = init_instance(EnvConfig(n_uavs=6, n_destinations=4), 3)
    assert len(world.uavs) == 6
    ends = {tuple(u.p_end) for u in world.uavs}
    assert len(ends) == 4


def test_tiny_arena_cannot_place():
    with pytest.raises(PlacementError):
        init_instance(EnvConfig(n_uavs=2, arena=(0.25, 0.25, 0.5)), 0)


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        EnvConfig(h_min=3.0, h_max=2.0)
    with pytest.raises(ValueError):
        EnvConfig(k_min=4, k_max=3)


# neighbors -----------------------------------------------------------------

def _brute_neighbors(world, i):
    d = world.config.d_nei
    uavs = [j for j in range(len(world.uavs)) if j != i
            and np.sqrt(np.sum((world.uavs[j].p - world.uavs[i].p) ** 2)) < d]
    haz = [k for k in range(len(world.hazards))
           if np.sqrt(np.sum((world.hazards[k].p - world.uavs[i].p) ** 2)) < d]
    return set(uavs), set(haz)


def test_single_uav_has_no_neighbors():
    world = make_world([(1, 1, 1)])
    assert neighbor_sets(world, 0) == ([], [])


def test_neighbor_boundary_is_strict():
    world = make_world([(0, 0, 1), (1.5, 0, 1)])
    assert world.config.d_nei == 1.5
    assert neighbor_sets(world, 0) == ([], [])


def test_collinear_neighbors():
    s = 0.9 * 1.5
    world = make_world([(0, 0, 1), (s, 0, 1), (2 * s, 0, 1)])
    counts = [len(neighbor_sets(world, i)[0]) for i in range(3)]
    assert counts == [1, 2, 1]
    for i in range(3):
        assert set(neighbor_sets(world, i)[0]) == _brute_neighbors(world, i)[0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_neighbors_match_brute_force(seed):
    world = init_instance(EnvConfig(n_uavs=6), seed)
    for i in range(6):
        uavs, haz = neighbor_sets(world, i)
        assert (set(uavs), set(haz)) == _brute_neighbors(world, i)
        du = [np.linalg.norm(world.uavs[j].p - world.uavs[i].p) for j in uavs]
        assert du == sorted(du)


def test_neighbor_ties_broken_by_id():
    world = make_world([(1, 1, 1), (1.5, 1, 1), (0.5, 1, 1)])
    assert neighbor_sets(world, 0)[0] == [1, 2]


# hazards -------------------------------------------------------------------

def test_collapsed_hazard_count():
    cfg = EnvConfig(k_min=3, k_max=3)
    for seed in range(20):
        world = init_instance(cfg, seed)
        assert len(world.hazards) == 3
        assert len(regenerate_hazards(world).hazards) == 3


def test_default_hazard_counts():
    seen = set()
    for seed in range(60):
        world = init_instance(EnvConfig(), seed)
        seen.add(len(world.hazards))
        regenerate_hazards(world)
        seen.add(len(world.hazards))
    assert seen == {3, 4, 5}


def _clearance(world):
    cfg = world.config
    return min(np.linalg.norm(u.p - h.p) - (cfg.rho_o + cfg.rho_u) for u in world.uavs for h in world.hazards)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_no_encompass_after_regeneration(seed):
    world = init_instance(EnvConfig(), seed)
    assert _clearance(world) > 0
    regenerate_hazards(world)
    assert _clearance(world) > 0
    assert world.hazard_epoch == 1


def test_candidate_on_uav_is_resampled():
    cfg = EnvConfig(n_uavs=1, k_min=1, k_max=1)
    world = make_world([(2.5, 2.5, 1.5)], config=cfg, seed=11)
    # replay the generator to find where the first candidate will land
    probe = np.random.default_rng(11)
    probe.integers(1, 2)
    lx, ly, _ = cfg.arena
    first = probe.uniform([0.3 * lx, 0.0, cfg.h_min], [0.7 * lx, ly, cfg.h_max])
    world.uavs[0].p = first.copy()
    regenerate_hazards(world)
    assert len(world.hazards) == 1
    assert not np.allclose(world.hazards[0].p, first)
    assert np.linalg.norm(world.hazards[0].p - first) > cfg.rho_o + cfg.rho_u


def test_hazard_sampling_exhausted(monkeypatch):
    cfg = EnvConfig(n_uavs=1, k_min=1, k_max=1, arena=(1.0, 1.0, 1.0), h_min=0.2, h_max=0.8, rho_o=0.9, d_nei=2.0)
    world = make_world([(0.5, 0.5, 0.5)], config=cfg)
    monkeypatch.setattr(env, "MAX_HAZARD_ATTEMPTS", 50)
    with pytest.raises(env.SamplingExhaustedError):
        regenerate_hazards(world)


# constraints ---------------------------------------------------------------

def _uav(p, v=(0, 0, 0), total=0.0):
    p = np.asarray(p, dtype=float)
    return UavState(id=0, p=p, p_start=p.copy(), p_end=p + 1, v=np.asarray(v, dtype=float), path_length_total=total)


def test_stationary_no_segment_violation():
    status = check_path_constraints(_uav((0, 0, 1), v=(1, 0, 0)), (0, 0, 1), EnvConfig())
    assert "segment" not in status.which
    assert not status.violated


def test_altitude_violation():
    status = check_path_constraints(_uav((0, 0, 1)), (1, 2, 3), EnvConfig(h_max=2.0))
    assert "altitude" in status.which and status.violated


def test_segment_length_hand_value():
    status = check_path_constraints(_uav((0, 0, 0)), (1, 2, 2), EnvConfig())
    assert status.segment_length == 3.0


def test_short_segment_only_on_turn():
    cfg = EnvConfig()
    straight = check_path_constraints(_uav((0, 0, 1), v=(1, 0, 0)), (0.005, 0, 1), cfg)
    turn = check_path_constraints(_uav((0, 0, 1), v=(1, 0, 0)), (0, 0.005, 1), cfg)
    assert not straight.violated
    assert turn.which == frozenset({"segment"})


def test_total_length_violation():
    status = check_path_constraints(_uav((0, 0, 1), v=(1, 0, 0), total=49.9), (0.2, 0, 1), EnvConfig())
    assert status.which == frozenset({"total_length"})


# rewards -------------------------------------------------------------------

def test_reward_at_goal_is_bonus():
    world = make_world([(1, 1, 1)], goals=[(1, 1, 1)], starts=[(0, 1, 1)])
    rb = compute_reward(world, 0, ConstraintStatus())
    assert (rb.r_int, rb.r_avo, rb.r_con) == (5.0, 0.0, 0.0)
    assert rb.r_path == 5.0


def test_reward_midpoint():
    world = make_world([(1, 1, 1)], goals=[(2, 1, 1)], starts=[(0, 1, 1)])
    assert compute_reward(world, 0, ConstraintStatus()).r_int == -0.5


def test_reward_on_collision_radius():
    cfg = EnvConfig(n_uavs=1)
    world = make_world([(0.4, 1, 1)], goals=[(3, 1, 1)], hazards=[((0, 1, 1), 0.3)], config=cfg)
    assert cfg.rho_ik == 0.4
    expected = -cfg.d_thr / cfg.rho_ik - cfg.r_a
    assert compute_reward(world, 0, ConstraintStatus()).r_avo == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-1.5)


def test_reward_threat_boundary_is_zero():
    cfg = EnvConfig(n_uavs=1)
    edge = cfg.rho_ik + cfg.d_thr
    world = make_world([(edge, 1, 1)], hazards=[((0, 1, 1), 0.3)], config=cfg)
    assert compute_reward(world, 0, ConstraintStatus()).r_avo == 0.0


def test_constraint_penalty():
    world = make_world([(1, 1, 1)])
    bad = ConstraintStatus(violated=True, which=frozenset({"altitude"}))
    assert compute_reward(world, 0, bad).r_con == -1.0


def test_uav_neighbor_penalty():
    cfg = EnvConfig(n_uavs=2)
    world = make_world([(1, 1, 1), (1.3, 1, 1)], config=cfg)
    expected = (0.3 - (cfg.rho_ij + cfg.d_thr)) / cfg.rho_ij - cfg.r_a
    assert compute_reward(world, 0, ConstraintStatus()).r_avo == pytest.approx(expected)


@given(st.floats(0.01, 0.59), st.floats(0.01, 0.59))
def test_threat_penalty_monotone(d1, d2):
    lo, hi = sorted((d1, d2))
    # distances a few ulps apart round to the same penalty
    assume(hi - lo > 1e-9)
    assert threat_penalty(lo, 0.4, 0.2, 1.0) < threat_penalty(hi, 0.4, 0.2, 1.0)


@given(st.floats(0.4 + 0.2, 10.0))
def test_threat_penalty_zero_outside(d):
    assert threat_penalty(d, 0.4, 0.2, 1.0) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_reward_additivity(seed):
    world = init_instance(EnvConfig(), seed)
    rng = np.random.default_rng(seed)
    planned = [u.p + rng.normal(0, 0.2, 3) for u in world.uavs]
    _, rewards, _ = step(world, planned)
    for rb in rewards:
        assert rb.r_path == rb.r_int + rb.r_avo + rb.r_con


# stepping ------------------------------------------------------------------

def test_step_identity_motion():
    world = make_world([(1, 1, 1), (1, 2, 1)])
    before = world.positions.copy()
    step(world, [u.p.copy() for u in world.uavs])
    assert world.t == 1
    assert np.array_equal(world.positions, before)
    assert all(np.array_equal(u.v, np.zeros(3)) for u in world.uavs)


def test_step_caps_displacement():
    world = make_world([(1, 1, 1)])
    cfg = world.config
    direction = np.array([1.0, 2.0, 2.0]) / 3.0
    step(world, [np.array([1, 1, 1]) + 2 * cfg.v_max * cfg.dt * direction])
    disp = world.uavs[0].p - np.array([1.0, 1, 1])
    assert np.linalg.norm(disp) == pytest.approx(cfg.v_max * cfg.dt, abs=1e-12)
    assert np.allclose(disp / np.linalg.norm(disp), direction)


def test_collision_counted_for_both():
    world = make_world([(1, 1, 1), (1.05, 1, 1)])
    target = np.array([1.02, 1.0, 1.0])
    step(world, [target, target])
    assert np.linalg.norm(world.uavs[0].p - world.uavs[1].p) < world.config.rho_ij
    assert [u.collisions for u in world.uavs] == [1, 1]
    assert world.collisions == 1


def test_step_after_done_raises():
    world = make_world([(1, 1, 1)], goals=[(1.05, 1, 1)])
    _, _, dones = step(world, [np.array([1.05, 1, 1])])
    assert dones == [True]
    with pytest.raises(EpisodeFinishedError):
        step(world, [np.array([1.05, 1, 1])])


def test_step_after_t_max_raises():
    world = make_world([(1, 1, 1)], t_max=2)
    for _ in range(2):
        step(world, [world.uavs[0].p.copy()])
    with pytest.raises(EpisodeFinishedError):
        step(world, [world.uavs[0].p.copy()])


def test_done_uav_stops_intrinsic_reward():
    world = make_world([(1, 1, 1), (0.2, 0.2, 1)], goals=[(1.05, 1, 1), (3, 0.2, 1)])
    step(world, [np.array([1.05, 1, 1]), world.uavs[1].p.copy()])
    _, rewards, _ = step(world, [None, world.uavs[1].p.copy()])
    assert rewards[0].r_int == 0.0
    assert np.array_equal(world.uavs[0].p, np.array([1.05, 1, 1]))


def test_hazards_regenerate_on_interval():
    cfg = EnvConfig(n_uavs=1, change_interval=3)
    world = init_instance(cfg, 5)
    epochs = []
    for _ in range(7):
        step(world, [world.uavs[0].p.copy()])
        epochs.append(world.hazard_epoch)
    assert epochs == [0, 0, 1, 1, 1, 2, 2]


def _random_rollout(seed, steps=40):
    world = init_instance(EnvConfig(), seed)
    rng = np.random.default_rng(seed + 1)
    trace = []
    for _ in range(steps):
        if world.finished:
            break
        planned = [u.p + rng.normal(0, 0.15, 3) for u in world.uavs]
        before = [u.p.copy() for u in world.uavs]
        _, rewards, _ = step(world, planned)
        trace.append((before, [u.p.copy() for u in world.uavs], [rb.r_path for rb in rewards], world.collisions))
    return world, trace


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_rollout_invariants(seed):
    world, trace = _random_rollout(seed)
    cfg = world.config
    seg_sum = np.zeros(len(world.uavs))
    for before, after, _, _ in trace:
        for i, (a, b) in enumerate(zip(before, after)):
            seg = float(np.linalg.norm(b - a))
            seg_sum[i] += seg
            assert seg / cfg.dt <= cfg.v_max + 1e-9
    for i, u in enumerate(world.uavs):
        assert abs(u.path_length_total - seg_sum[i]) <= 1e-9 * max(len(trace), 1)
        assert np.linalg.norm(u.v) <= cfg.v_max + 1e-9


def test_rollout_deterministic():
    _, a = _random_rollout(42)
    _, b = _random_rollout(42)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert all(np.array_equal(p, q) for p, q in zip(x[1], y[1]))
        assert x[2] == y[2] and x[3] == y[3]

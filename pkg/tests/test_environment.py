"""Gridworld contracts: gradients of noise and affordance, body dynamics, oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from somagrid.environment import (
    Action,
    EnvParams,
    EnvState,
    GridWorld,
    ZONE_LABELS,
    zone_of,
)
from somagrid.numcore import ContractError, sigmoid_scalar


@pytest.fixture(scope="module")
def world():
    return GridWorld()


# ---------------------------------------------------------------------------
# affordance gradient
# ---------------------------------------------------------------------------

def test_affordance_midpoint_zero(world):
    assert world.affordance(7) == 0.0


def test_affordance_top_row(world):
    expect = sigmoid_scalar(1.6 * 3.0) - 0.5
    assert math.isclose(world.affordance(0), expect, rel_tol=1e-12)
    assert 0.45 <= world.affordance(0) <= 0.5


def test_affordance_bottom_mirrors_top(world):
    assert math.isclose(world.affordance(14), -world.affordance(0), abs_tol=1e-12)
    assert -0.5 <= world.affordance(14) <= -0.45


def test_affordance_monotone_decreasing(world):
    vals = [world.affordance(r) for r in range(15)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert abs(world.affordance(7)) <= 0.05


def test_affordance_out_of_range(world):
    with pytest.raises(ContractError):
        world.affordance(15)


# ---------------------------------------------------------------------------
# observation noise gradient
# ---------------------------------------------------------------------------

def test_noise_std_linear(world):
    assert math.isclose(world.noise_std(0), 0.40, rel_tol=1e-12)
    assert math.isclose(world.noise_std(14), 0.05, rel_tol=1e-12)
    mid = world.noise_std(7)
    assert math.isclose(mid, 0.40 + (0.05 - 0.40) * 7 / 14, rel_tol=1e-12)
    stds = [world.noise_std(c) for c in range(15)]
    assert all(a > b for a, b in zip(stds, stds[1:]))


def _empirical_noise_std(world, col, draws):
    rng = np.random.default_rng(12345)
    state = EnvState(7, col, 0.0, 0, rng)
    samples = []
    texture = np.array([world.texture(7 + dr, col + dc)
                        for dr, dc in ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))])
    for _ in range(draws // 8):
        obs = world.observe(state)
        samples.append(obs.x - texture)
    return float(np.concatenate(samples).std())


def test_noise_monte_carlo_bounds(world):
    # 1e5 noise draws pooled over the 8 channels at each column
    assert 0.36 <= _empirical_noise_std(world, 0, 100_000) <= 0.44
    assert 0.045 <= _empirical_noise_std(world, 14, 100_000) <= 0.055


def test_noise_column_monotonicity(world):
    stds = [_empirical_noise_std(world, c, 20_000) for c in range(0, 15, 2)]
    assert all(a > b for a, b in zip(stds, stds[1:]))


# ---------------------------------------------------------------------------
# body dynamics
# ---------------------------------------------------------------------------

def test_step_body_center_stationary(world):
    assert math.isclose(world.step_body(0.0, False, 7, 7), -0.002, abs_tol=1e-15)


def test_step_body_center_moved(world):
    assert math.isclose(world.step_body(0.0, True, 7, 7), -0.003, abs_tol=1e-15)


def test_step_body_top_row(world):
    expect = 0.995 * 1.0 - 0.002 + 0.05 * world.affordance(0)
    got = world.step_body(1.0, False, 0, 7)
    assert math.isclose(got, expect, rel_tol=1e-15)
    assert math.isclose(got, 1.01759, abs_tol=5e-5)


def test_stay_at_center_drains_monotonically(world):
    rng = np.random.default_rng(0)
    state = world.initial_state(rng)
    prev = state.u
    for _ in range(200):
        world.step(state, Action.STAY, rng)
        assert state.u < prev
        prev = state.u
        assert state.row == 7 and state.col == 7


def test_top_row_fixed_point_closed_form(world):
    u_star = world.stay_fixed_point(0)
    assert math.isclose(u_star, 4.518374288468398, rel_tol=1e-12)
    a0 = world.affordance(0)
    assert math.isclose(u_star, (-0.002 + 0.05 * a0) / (1 - 0.995), rel_tol=1e-12)


def test_top_row_stay_converges_to_fixed_point(world):
    rng = np.random.default_rng(1)
    state = EnvState(0, 7, 0.0, 0, rng)
    u_star = world.stay_fixed_point(0)
    prev = state.u
    for _ in range(2000):
        world.step(state, Action.STAY, rng)
        assert prev < state.u < u_star  # monotone from below
        prev = state.u
    assert abs(state.u - u_star) <= 1e-3


# ---------------------------------------------------------------------------
# observation contract
# ---------------------------------------------------------------------------

def test_readout_is_exact_logistic(world):
    rng = np.random.default_rng(2)
    state = EnvState(4, 9, 0.0, 0, rng)
    assert world.observe(state).b_tilde == 0.5
    state.u = 1.7
    assert world.observe(state).b_tilde == sigmoid_scalar(1.7)


def test_noiseless_observation_exact_values(world):
    state = EnvState(7, 7, 0.3, 0)
    obs = world.observe(state, noiseless=True)
    expect_x = [world.texture(7 + dr, 7 + dc)
                for dr, dc in ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))]
    assert np.array_equal(obs.x, expect_x)
    expect_sil = [world.affordance(6), world.affordance(8), world.affordance(7), world.affordance(7)]
    assert np.array_equal(obs.silhouette, expect_sil)


def test_silhouette_out_of_grid_uses_own_cell(world):
    state = EnvState(0, 7, 0.0, 0)
    obs = world.observe(state, noiseless=True)
    # UP neighbor is out of grid: silhouette reads the agent's own row
    assert obs.silhouette[Action.UP] == world.affordance(0)
    assert obs.silhouette[Action.DOWN] == world.affordance(1)


def test_observe_requires_rng_when_noisy(world):
    with pytest.raises(ContractError):
        world.observe(EnvState(7, 7, 0.0, 0))


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def test_stay_at_center(world):
    rng = np.random.default_rng(3)
    state = world.initial_state(rng)
    _, moved = world.step(state, Action.STAY, rng)
    assert not moved
    assert (state.row, state.col) == (7, 7)
    assert math.isclose(state.u, -0.002, abs_tol=1e-15)
    assert state.t == 1


def test_up_against_wall_clamps(world):
    rng = np.random.default_rng(4)
    state = EnvState(0, 5, 0.0, 0, rng)
    _, moved = world.step(state, Action.UP, rng)
    assert not moved
    assert (state.row, state.col) == (0, 5)


def test_up_from_center(world):
    rng = np.random.default_rng(5)
    state = world.initial_state(rng)
    _, moved = world.step(state, Action.UP, rng)
    assert moved
    assert (state.row, state.col) == (6, 7)
    expect = -0.003 + 0.05 * world.affordance(6)
    assert math.isclose(state.u, expect, rel_tol=1e-12)


def test_wall_clamping_fuzz(world):
    rng = np.random.default_rng(6)
    row, col = 7, 7
    for action in rng.integers(0, 5, size=1_000_000):
        row, col, _ = world.move(row, col, int(action))
        assert 0 <= row < 15 and 0 <= col < 15


def test_full_step_fuzz_stays_in_grid(world):
    rng = np.random.default_rng(7)
    state = world.initial_state(rng)
    for action in rng.integers(0, 5, size=5_000):
        world.step(state, int(action), rng)
        assert 0 <= state.row < 15 and 0 <= state.col < 15
        assert math.isfinite(state.u)


# ---------------------------------------------------------------------------
# counterfactual oracle
# ---------------------------------------------------------------------------

def test_counterfactual_single_stay(world):
    state = EnvState(7, 7, 0.0, 0)
    assert math.isclose(world.counterfactual_tendency(state, Action.STAY, 1), -0.002, abs_tol=1e-15)


def test_counterfactual_up_beats_down(world):
    for row in range(1, 14):
        state = EnvState(row, 7, 0.4, 0)
        up = world.counterfactual_tendency(state, Action.UP, 4)
        down = world.counterfactual_tendency(state, Action.DOWN, 4)
        assert up > down


def test_counterfactual_matches_independent_rollout(world):
    state = EnvState(7, 7, 0.0, 0)
    got = world.counterfactual_tendency(state, Action.UP, 4)
    u, row = 0.0, 7
    for _ in range(4):
        new_row = max(row - 1, 0)
        moved = new_row != row
        row = new_row
        u = 0.995 * u - 0.002 - (0.001 if moved else 0.0) + 0.05 * world.affordance(row)
    assert math.isclose(got, u - 0.0, rel_tol=1e-12)


def test_counterfactual_never_mutates_state(world):
    rng = np.random.default_rng(8)
    state = EnvState(3, 11, 0.73, 5, rng)
    before = state.fingerprint()
    for a in range(5):
        world.counterfactual_tendency(state, a, 6)
        world.counterfactual_readout(state, a)
    assert state.fingerprint() == before


def test_counterfactual_requires_positive_horizon(world):
    with pytest.raises(ContractError):
        world.counterfactual_tendency(EnvState(7, 7, 0.0, 0), Action.UP, 0)


@given(st.integers(0, 14), st.integers(0, 14), st.floats(-3, 3), st.integers(0, 4))
@settings(max_examples=80, deadline=None)
def test_counterfactual_pure_function(row, col, u, action):
    w = GridWorld()
    s1 = EnvState(row, col, u, 0)
    s2 = EnvState(row, col, u, 0)
    k = 3
    assert w.counterfactual_tendency(s1, action, k) == w.counterfactual_tendency(s2, action, k)
    assert s1.fingerprint() == s2.fingerprint()


# ---------------------------------------------------------------------------
# shock injection
# ---------------------------------------------------------------------------

def test_inject_shock_basic(world):
    state = EnvState(7, 7, 0.0, 0)
    world.inject_shock(state, -0.08)
    assert math.isclose(state.u, -0.08, abs_tol=1e-15)
    assert state.shock_log == [(0, -0.08)]


def test_twenty_injections_sum(world):
    state = EnvState(7, 7, 0.0, 0)
    for _ in range(20):
        world.inject_shock(state, -0.08)
    total = sum(d for _, d in state.shock_log)
    assert math.isclose(total, -1.6, abs_tol=1e-12)
    assert math.isclose(state.u, -1.6, abs_tol=1e-12)


# ---------------------------------------------------------------------------
# zones
# ---------------------------------------------------------------------------

def test_zone_examples(world):
    assert world.zone_label(0, 14) == "top-right"
    assert world.zone_label(7, 7) == "middle-middle"
    assert world.zone_label(14, 2) == "bottom-left"
    assert zone_of(0, 14) == 2


def test_zones_partition_grid(world):
    counts = np.zeros(9, dtype=int)
    for r in range(15):
        for c in range(15):
            counts[world.zone_of(r, c)] += 1
    assert (counts == 25).all()
    assert len(ZONE_LABELS) == 9


def test_zone_rejects_out_of_grid(world):
    with pytest.raises(ContractError):
        world.zone_of(15, 0)

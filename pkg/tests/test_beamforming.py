"""Case-study tests: steering model, channel statistics, secrecy objective,
initialization, port selection, and the Monte-Carlo sweep.

The gradient check and the brute-force grid oracle serve as the independent
references for the optimization surfaces; channel statistics are validated
by construction and by Monte Carlo.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from riemopt.beamforming import (
    BudgetError,
    ChannelRealization,
    PathSet,
    PortGrid,
    SecrecyScenario,
    channel_from_paths,
    constant_modulus_chart,
    monte_carlo_sweep,
    mrt_init,
    optimize_beamforming,
    run_trial,
    sample_channels,
    secrecy_cost,
    secrecy_manifold,
    secrecy_rate,
    select_ports,
    steering_vector,
    trial_rng,
)
from riemopt.manifolds import ComplexSphere, Product
from riemopt.solvers import SolverConfig, solve_rtr
from riemopt.verify import check_gradient, grid_oracle


def make_channel(h_bob, h_eve):
    """Wrap explicit channel vectors for the optimizer entry points."""
    n = len(h_bob)
    empty = PathSet(np.zeros(0, dtype=complex), np.zeros(0), np.zeros(0))
    return ChannelRealization(
        h_bob=np.asarray(h_bob, dtype=complex),
        h_eve=np.asarray(h_eve, dtype=complex),
        ports=tuple(range(n)),
        paths_bob=empty,
        paths_eve=empty,
    )


# ---------------------------------------------------------------------------
# grid and steering


def test_default_grid_is_4x2_half_wavelength():
    grid = PortGrid()
    assert grid.n_ports == 8 and grid.n_active == 4
    assert grid.positions[0] == (0.0, 0.0)
    assert grid.positions[1] == (0.5, 0.0)
    assert grid.region == (1.5, 0.5)


def test_grid_validation():
    with pytest.raises(ValueError):
        PortGrid(n_ports=4, n_active=5)
    with pytest.raises(ValueError):
        PortGrid(n_ports=2, n_active=1, positions=((0, 0), (0, 0)))


def test_steering_origin_entry_is_one():
    v = steering_vector([(0.0, 0.0)], theta=0.7, phi=1.1, wavelength=1.0)
    assert v[0] == pytest.approx(1.0, abs=1e-15)


def test_steering_boresight_all_ones():
    grid = PortGrid()
    v = steering_vector(grid.position_array(range(8)), 0.0, 0.4, 1.0)
    np.testing.assert_allclose(v, np.ones(8), atol=1e-15)


def test_steering_half_wavelength_endfire():
    v = steering_vector([(0.5, 0.0)], theta=np.pi / 2, phi=0.0, wavelength=1.0)
    assert v[0] == pytest.approx(-1.0, abs=1e-12)
    assert abs(v[0]) == pytest.approx(1.0, abs=1e-15)


def test_steering_rejects_bad_wavelength():
    with pytest.raises(ValueError):
        steering_vector([(0.0, 0.0)], 0.1, 0.1, 0.0)


# ---------------------------------------------------------------------------
# channel model


def test_single_unit_path_has_exact_power():
    grid = PortGrid(n_ports=4, n_active=4)
    paths = PathSet(np.array([1.0 + 0j]), np.array([0.8]), np.array([2.1]))
    h = channel_from_paths(grid, paths, range(4))
    # one unit-gain path: every entry has unit modulus
    assert np.linalg.norm(h) ** 2 == pytest.approx(4.0, rel=1e-12)


def test_sample_channels_deterministic():
    sc = SecrecyScenario(grid=PortGrid())
    a = sample_channels(sc, np.random.default_rng(5))
    b = sample_channels(sc, np.random.default_rng(5))
    np.testing.assert_array_equal(a.h_bob, b.h_bob)
    np.testing.assert_array_equal(a.h_eve, b.h_eve)


def test_sample_channels_respects_active_ports():
    sc = SecrecyScenario(grid=PortGrid())
    ch = sample_channels(sc, np.random.default_rng(6), active_ports=(1, 3, 5, 7))
    assert len(ch.h_bob) == 4
    assert ch.ports == (1, 3, 5, 7)


def test_restrict_indexes_full_realization():
    sc = SecrecyScenario(grid=PortGrid())
    ch = sample_channels(sc, np.random.default_rng(7))
    hb, he = ch.restrict([0, 2, 4, 6])
    np.testing.assert_array_equal(hb, ch.h_bob[[0, 2, 4, 6]])
    np.testing.assert_array_equal(he, ch.h_eve[[0, 2, 4, 6]])


def test_per_port_average_power_is_unit():
    sc = SecrecyScenario(grid=PortGrid(), n_paths=4)
    rng = np.random.default_rng(8)
    acc = np.zeros(8)
    n_draws = 10_000
    for _ in range(n_draws):
        paths = PathSet(
            (rng.standard_normal(4) + 1j * rng.standard_normal(4)) / np.sqrt(8),
            rng.uniform(0, np.pi / 2, 4),
            rng.uniform(0, 2 * np.pi, 4),
        )
        h = channel_from_paths(sc.grid, paths, range(8))
        acc += np.abs(h) ** 2
    mean_power = acc / n_draws
    np.testing.assert_allclose(mean_power, 1.0, atol=0.05)


# ---------------------------------------------------------------------------
# secrecy rate and cost


def test_secrecy_rate_orthogonal_channels():
    r = secrecy_rate(
        w=[1.0, 0.0], z=None, h_bob=[1.0, 0.0], h_eve=[0.0, 1.0], noise_power=1.0
    )
    assert r == pytest.approx(1.0, abs=1e-14)


def test_secrecy_rate_equal_channels_is_zero():
    rng = np.random.default_rng(9)
    h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    for _ in range(5):
        w = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        assert secrecy_rate(w, None, h, h, 1.0) == 0.0


def test_secrecy_rate_zero_signal():
    rng = np.random.default_rng(10)
    z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    r = secrecy_rate(np.zeros(3), z, [1, 0, 0], [0, 1, 0], 1.0)
    assert r == 0.0


def test_secrecy_rate_rejects_bad_noise():
    with pytest.raises(ValueError):
        secrecy_rate([1.0], None, [1.0], [1.0], 0.0)


def test_secrecy_manifold_shapes():
    man = secrecy_manifold(4, 0.8, 10.0)
    assert isinstance(man, Product)
    assert man.factors[0].radius == pytest.approx(math.sqrt(8.0))
    assert man.factors[1].radius == pytest.approx(math.sqrt(2.0))
    single = secrecy_manifold(4, 1.0, 10.0)
    assert isinstance(single, ComplexSphere)


def test_secrecy_cost_value_matches_rate():
    rng = np.random.default_rng(11)
    hb = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    he = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    man, cost = secrecy_cost(hb, he, 1.0, 0.8, 5.0)
    pt = man.random_point(rng)
    w, z = pt
    assert cost.value(pt) == pytest.approx(-secrecy_rate(w, z, hb, he, 1.0), rel=1e-12)


def test_secrecy_gradient_pure_bob_term():
    # orthogonal channels with w aligned to Bob: the Eve term vanishes and
    # the w-gradient is parallel to h_bob
    hb = np.array([1.0, 1.0, 0.0, 0.0], dtype=complex)
    he = np.array([0.0, 0.0, 1.0, -1.0], dtype=complex)
    man, cost = secrecy_cost(hb, he, 1.0, 1.0, 4.0)
    w = 2.0 * hb / np.linalg.norm(hb)
    g = cost.euclidean_grad(w)
    cross = g - hb * (np.vdot(hb, g) / np.vdot(hb, hb))
    np.testing.assert_allclose(cross, 0.0, atol=1e-14)


def test_secrecy_gradient_slope_check_is_the_oracle():
    # five random feasible points on each of five channel realizations
    sc = SecrecyScenario(grid=PortGrid())
    rng = np.random.default_rng(12)
    for rep in range(5):
        ch = sample_channels(sc, np.random.default_rng([12, rep]))
        hb, he = ch.restrict([0, 1, 2, 3])
        man, cost = secrecy_cost(hb, he, sc.noise_power, sc.alpha, sc.total_power)
        for _ in range(5):
            x = man.random_point(rng)
            res = check_gradient(cost, man, x, trials=2, rng=rng)
            assert res.passed, f"order {res.order:.2f}"


def test_moving_toward_bob_decreases_cost_without_eve():
    hb = np.array([1.0, -1.0j, 0.5], dtype=complex)
    he = np.zeros(3, dtype=complex)  # no eavesdropper visibility
    man, cost = secrecy_cost(hb, he, 1.0, 1.0, 2.0)
    rng = np.random.default_rng(13)
    w = man.random_point(rng)
    f0 = cost.value(w)
    mrt = math.sqrt(2.0) * hb / np.linalg.norm(hb)
    step = man.project(w, mrt - w)
    blend = man.retract(w, 0.3 * step)
    assert cost.value(blend) < f0


def test_global_phase_invariance():
    rng = np.random.default_rng(14)
    hb = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    he = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    man, cost = secrecy_cost(hb, he, 1.0, 0.7, 3.0)
    pt = man.random_point(rng)
    base = cost.value(pt)
    for phi, psi in ((0.3, 1.2), (2.1, -0.4), (np.pi, np.pi / 3)):
        rotated = (pt[0] * np.exp(1j * phi), pt[1] * np.exp(1j * psi))
        assert cost.value(rotated) == pytest.approx(base, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------------------
# initialization


def test_mrt_init_norms_and_orthogonality():
    rng = np.random.default_rng(15)
    hb = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    alpha, power = 0.8, 10.0
    w0, z0 = mrt_init(hb, alpha, power, rng)
    assert np.linalg.norm(w0) == pytest.approx(math.sqrt(alpha * power), rel=1e-12)
    assert np.linalg.norm(z0) == pytest.approx(math.sqrt((1 - alpha) * power), rel=1e-12)
    assert abs(np.vdot(hb, z0)) <= 1e-10 * np.linalg.norm(hb) * np.linalg.norm(z0)


def test_mrt_init_alpha_one_returns_single_vector():
    rng = np.random.default_rng(16)
    hb = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    w0 = mrt_init(hb, 1.0, 4.0, rng)
    assert isinstance(w0, np.ndarray)
    assert np.linalg.norm(w0) == pytest.approx(2.0, rel=1e-12)


def test_mrt_init_rejects_zero_channel():
    with pytest.raises(ValueError):
        mrt_init(np.zeros(3), 0.8, 1.0, np.random.default_rng(0))


def test_mrt_init_beats_random_noise_vector_in_median():
    rng = np.random.default_rng(17)
    hb = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    he = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    alpha, power, noise = 0.8, 10.0, 1.0
    w0, z0 = mrt_init(hb, alpha, power, rng)
    r_init = secrecy_rate(w0, z0, hb, he, noise)
    r_z = math.sqrt((1 - alpha) * power)
    diffs = []
    for _ in range(100):
        z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        z *= r_z / np.linalg.norm(z)
        diffs.append(r_init - secrecy_rate(w0, z, hb, he, noise))
    assert np.median(diffs) > 0.0


# ---------------------------------------------------------------------------
# optimize_beamforming


def test_optimize_alpha_one_orthogonal_channels_is_stationary():
    hb = np.array([1.0, 1.0, 0.0, 0.0], dtype=complex)
    he = np.array([0.0, 0.0, 1.0, 1.0], dtype=complex)
    ch = make_channel(hb, he)
    power, noise = 4.0, 1.0
    sc = SecrecyScenario(
        grid=PortGrid(n_ports=4, n_active=4),
        total_power=power,
        alpha=1.0,
        noise_power=noise,
        solver="rgd",
    )
    rate, point, report = optimize_beamforming(sc, ch, (0, 1, 2, 3), np.random.default_rng(0))
    assert report.iterations == 0  # MRT is already optimal here
    expected = math.log2(1 + power * np.linalg.norm(hb) ** 2 / noise)
    assert rate == pytest.approx(expected, rel=1e-12)


def test_optimize_never_worse_than_mrt_start():
    sc = SecrecyScenario(grid=PortGrid(), total_power=10.0)
    for trial in range(5):
        rng = trial_rng(3, 0, trial)
        ch = sample_channels(sc, rng)
        rate, point, report = optimize_beamforming(sc, ch, (0, 1, 2, 3), rng)
        init_rate = -report.cost_trace[0]
        final_rate = -report.final_cost
        assert final_rate >= init_rate - 1e-12


def test_optimize_keeps_power_feasible():
    sc = SecrecyScenario(grid=PortGrid(), total_power=8.0)
    rng = trial_rng(4, 0, 0)
    ch = sample_channels(sc, rng)
    rate, point, report = optimize_beamforming(sc, ch, (0, 1, 2, 3), rng)
    w, z = point
    aP = sc.alpha * sc.total_power
    assert abs(np.linalg.norm(w) ** 2 - aP) <= 1e-9 * aP
    bP = (1 - sc.alpha) * sc.total_power
    assert abs(np.linalg.norm(z) ** 2 - bP) <= 1e-9 * bP


def test_phase_chart_multistart_matches_grid_oracle_smoke():
    sc = SecrecyScenario(grid=PortGrid(n_ports=4, n_active=2), total_power=10.0)
    cfg = SolverConfig(grad_tol=1e-7, max_iters=500)
    for chan_seed in range(2):
        rng = np.random.default_rng([20, chan_seed])
        ch = sample_channels(sc, rng, active_ports=(0, 1))
        man, cost = constant_modulus_chart(
            ch.h_bob, ch.h_eve, sc.noise_power, sc.alpha, sc.total_power
        )
        grid_val, _ = grid_oracle(cost, man, 180, phase_invariant=True)
        best = min(
            solve_rtr(cost, man, man.random_point(rng), cfg).final_cost
            for _ in range(6)
        )
        assert best == pytest.approx(grid_val, abs=2e-2)


# ---------------------------------------------------------------------------
# port selection


def test_select_ports_single_subset():
    sc = SecrecyScenario(grid=PortGrid(n_ports=4, n_active=4))
    rng = trial_rng(5, 0, 0)
    ch = sample_channels(sc, rng)
    sel = select_ports(sc, ch, rng)
    assert len(sel.table) == 1
    assert sel.best_ports == (0, 1, 2, 3)


def test_select_ports_eight_choose_four():
    sc = SecrecyScenario(grid=PortGrid(), solver="rtr")
    rng = trial_rng(6, 0, 0)
    ch = sample_channels(sc, rng)
    sel = select_ports(sc, ch, rng)
    assert len(sel.table) == 70
    assert all(len(row.ports) == 4 for row in sel.table)
    assert all(sel.best_rate >= row.rate for row in sel.table)
    subsets = [row.ports for row in sel.table]
    assert subsets == sorted(subsets)  # lexicographic order


def test_select_ports_budget_error_mentions_greedy():
    sc = SecrecyScenario(grid=PortGrid(n_ports=20, n_active=10))
    rng = trial_rng(7, 0, 0)
    ch = sample_channels(sc, rng)
    with pytest.raises(BudgetError, match="greedy"):
        select_ports(sc, ch, rng)


def test_select_ports_greedy_fallback():
    sc = SecrecyScenario(grid=PortGrid(n_ports=6, n_active=3), solver="rtr")
    rng = trial_rng(8, 0, 0)
    ch = sample_channels(sc, rng)
    sel = select_ports(sc, ch, rng, method="greedy")
    assert len(sel.best_ports) == 3
    assert len(sel.table) == 6 + 5 + 4
    assert sel.best_rate >= 0.0


# ---------------------------------------------------------------------------
# monte carlo sweep


def test_sweep_row_structure_and_determinism():
    sc = SecrecyScenario(
        grid=PortGrid(), snr_grid_db=(0.0, 10.0), trials=1, seed=9, solver="rtr"
    )
    res1 = monte_carlo_sweep(sc)
    res2 = monte_carlo_sweep(sc)
    assert [r.asr for r in res1.rows] == [r.asr for r in res2.rows]
    assert [r.mean_iters for r in res1.rows] == [r.mean_iters for r in res2.rows]
    assert [r.snr_db for r in res1.rows] == [0.0, 10.0]
    for row in res1.rows:
        assert row.trials == 1 and row.seed == 9
        assert row.asr >= 0.0 and row.asr_stderr == 0.0


def test_trial_result_invariants():
    sc = SecrecyScenario(grid=PortGrid(), total_power=10.0, solver="rtr")
    for ti in range(3):
        tr = run_trial(sc, trial_rng(10, 0, ti))
        assert tr.secrecy_rate >= 0.0
        assert len(tr.selected_ports) == sc.grid.n_active
        assert tr.final_rate >= tr.init_rate - 1e-12
        assert tr.secrecy_rate == max(0.0, tr.final_rate)


def test_scenario_validation():
    with pytest.raises(ValueError):
        SecrecyScenario(grid=PortGrid(), alpha=0.0)
    with pytest.raises(ValueError):
        SecrecyScenario(grid=PortGrid(), noise_power=-1.0)
    with pytest.raises(ValueError):
        SecrecyScenario(grid=PortGrid(), solver="newton")
    with pytest.raises(ValueError):
        monte_carlo_sweep(replace(SecrecyScenario(grid=PortGrid()), trials=0))

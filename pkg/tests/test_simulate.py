import numpy as np
import pytest

import mlqswitch.simulate as sim
from mlqswitch.closed_form import ex43_spec, scalar_spec
from mlqswitch.exceptions import DomainError, SimulationError
from mlqswitch.model import TimeGrid, build_stopped_system
from mlqswitch.riccati import solve_stage1, solve_stage2, value_at_zero
from mlqswitch.simulate import (OptimalFeedback, SimConfig, brownian_increments,
                                compare_controls, path_costs, simulate_closed_loop,
                                simulate_with_control, stationarity_check)

from conftest import CERTIFICATE, EX43, NOISY


def solved(spec, r, n_steps=2000):
    s2 = solve_stage2(spec, n_steps)
    return s2, solve_stage1(spec, r, s2.P_at(r), n_steps)


@pytest.fixture(scope="module")
def noisy():
    spec = scalar_spec(NOISY)
    return (spec, *solved(spec, 0.5))


@pytest.fixture(scope="module")
def example():
    spec = ex43_spec(EX43)
    return (spec, *solved(spec, 0.5))


def zero_control(t, x):
    return np.zeros((x.shape[0], 1))


class TestConfig:
    def test_antithetic_needs_even_count(self):
        with pytest.raises(DomainError):
            SimConfig(n_paths=3, antithetic=True)

    @pytest.mark.parametrize("kw", [{"n_paths": 0}, {"n_steps": 1}, {"seed": -1}, {"seed": 2 ** 64}])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(DomainError):
            SimConfig(**kw)


class TestIncrements:
    def test_streams_are_per_path(self):
        a = brownian_increments(5, 0, 10, 50, 0.02)
        b = brownian_increments(5, 4, 3, 50, 0.02)
        np.testing.assert_array_equal(a[4:7], b)

    def test_antithetic_pairs(self):
        dW = brownian_increments(5, 0, 6, 40, 0.025, antithetic=True)
        np.testing.assert_array_equal(dW[1::2], -dW[0::2])

    def test_variance(self):
        dW = brownian_increments(0, 0, 4000, 100, 0.01)
        assert dW.var() == pytest.approx(0.01, rel=0.02)


class TestCosts:
    def test_zero_state_costs_nothing(self, noisy):
        spec, s2, s1 = noisy
        rep, _ = simulate_closed_loop(spec, 0.5, s2, s1, [0.0], SimConfig(n_paths=50, n_steps=100))
        assert rep.mean_cost == 0.0 and rep.std_error == 0.0

    def test_deterministic_example(self, example):
        spec, s2, s1 = example
        rep, _ = simulate_closed_loop(spec, 0.5, s2, s1, [1.0, 0.0], SimConfig(n_paths=4))
        assert rep.std_error == 0.0
        assert rep.mean_cost == pytest.approx(0.77922, abs=2e-3)

    def test_euler_flow_terminal_cost(self):
        a1, a2, k, g = 0.3, -0.5, 1.5, 2.0
        spec = build_stopped_system(a1, 1, 0, 0, 0, 1, 0, a2, 1, 0, 0, 0, 1, g, k,
                                    TimeGrid.horizon(1.0, 2))
        n = 200
        rep = simulate_with_control(spec, 0.25, zero_control, [1.0],
                                    SimConfig(n_paths=3, n_steps=n))
        dt = 1.0 / n
        x_end = (1 + a1 * dt) ** 50 * k * (1 + a2 * dt) ** 150
        assert rep.mean_cost == pytest.approx(0.5 * g * x_end ** 2, rel=1e-12)

    def test_value_identity_small(self, noisy):
        spec, s2, s1 = noisy
        rep, _ = simulate_closed_loop(spec, 0.5, s2, s1, [1.0], SimConfig(n_paths=20_000, seed=3))
        assert abs(rep.mean_cost - value_at_zero(s1, [1.0])) <= 3 * rep.std_error

    def test_discretization_error_halves(self):
        # drift under feedback makes the Euler bias first order in dt
        spec = scalar_spec(CERTIFICATE)
        exact = value_at_zero(solved(spec, 0.5)[1], [1.0])
        errs = []
        for n in (100, 200, 400):
            s2n, s1n = solved(spec, 0.5, n)
            rep, _ = simulate_closed_loop(spec, 0.5, s2n, s1n, [1.0], SimConfig(n_paths=2, n_steps=n))
            errs.append(abs(rep.mean_cost - exact))
        assert 1.8 <= errs[0] / errs[1] <= 2.2
        assert 1.8 <= errs[1] / errs[2] <= 2.2

    def test_snapping_resolves_stage1(self, example):
        spec, s2, s1 = example
        rep, sample = simulate_closed_loop(spec, 0.503, s2, s1, [1.0, 0.0],
                                           SimConfig(n_paths=2, n_steps=100))
        assert rep.r_used == sample.r == pytest.approx(0.5)


class TestControls:
    def test_same_control_gap_is_zero(self, noisy):
        spec, s2, s1 = noisy
        opt = OptimalFeedback(spec, s2, s1)
        assert compare_controls(spec, 0.5, opt, opt, [1.0], SimConfig(n_paths=200)) == (0.0, 0.0)

    def test_zero_control_is_worse(self, noisy):
        spec, s2, s1 = noisy
        opt = OptimalFeedback(spec, s2, s1)
        gap, se = compare_controls(spec, 0.5, zero_control, opt, [1.0], SimConfig(n_paths=5000))
        assert gap > 3 * se

    def test_external_law_is_bit_identical(self, noisy):
        spec, s2, s1 = noisy
        cfg = SimConfig(n_paths=300, n_steps=500, seed=11)
        s1n = solve_stage1(spec, 0.5, s2.P_at(0.5), 500)
        ref, _ = simulate_closed_loop(spec, 0.5, s2, s1n, [1.0], cfg)
        law = OptimalFeedback(spec, s2, s1n)
        assert simulate_with_control(spec, 0.5, law, [1.0], cfg).mean_cost == ref.mean_cost
        # a bare callable runs the generic loop and agrees to round-off
        plain = simulate_with_control(spec, 0.5, lambda t, x: law(t, x), [1.0], cfg)
        assert plain.mean_cost == pytest.approx(ref.mean_cost, rel=1e-12)

    def test_bad_control_shape(self, noisy):
        spec = noisy[0]
        with pytest.raises(DomainError):
            simulate_with_control(spec, 0.5, lambda t, x: np.zeros(x.shape[0]), [1.0],
                                  SimConfig(n_paths=2, n_steps=10))

    def test_nan_path_raises(self, noisy):
        spec = noisy[0]
        with pytest.raises(SimulationError) as info:
            simulate_with_control(spec, 0.5, lambda t, x: np.full((x.shape[0], 1), np.nan),
                                  [1.0], SimConfig(n_paths=4, n_steps=10))
        assert info.value.path == 0 and info.value.step == 1

    def test_nan_on_fast_path_reports_step(self, noisy):
        spec = noisy[0]

        class Broken:
            def __call__(self, t, x):
                return np.full((x.shape[0], 1), np.nan)

            def node_gains(self, times, stage):
                return np.full((len(times), 1, 1 if stage == 1 else 2), np.nan)

        with pytest.raises(SimulationError) as info:
            simulate_with_control(spec, 0.5, Broken(), [1.0], SimConfig(n_paths=4, n_steps=10))
        assert info.value.step == 1


class TestStationarity:
    def test_closed_loop_residuals(self, noisy):
        spec, s2, s1 = noisy
        _, sample = simulate_closed_loop(spec, 0.5, s2, s1, [1.0], SimConfig(n_paths=20))
        res = stationarity_check(spec, 0.5, s2, s1, sample)
        assert res.max_residual <= 1e-9 * (1 + res.max_state)
        assert res.terminal_residual <= 1e-12
        assert res.jump_residual <= 1e-9

    def test_perturbed_control_detected(self, noisy):
        spec, s2, s1 = noisy
        opt = OptimalFeedback(spec, s2, s1)
        _, r_used, sample = path_costs(spec, 0.5, lambda t, x: opt(t, x) + 0.1, [1.0],
                                       SimConfig(n_paths=5), record=5)
        res = stationarity_check(spec, r_used, s2, s1, sample)
        min_eig = min(np.linalg.eigvalsh(spec.at("R", t) + spec.at("D", t).T @ s2.P_at(t)
                                         @ spec.at("D", t)).min() for t in sample.t2)
        assert np.all(res.stage2_residuals >= 0.05 * min_eig)

    def test_mismatched_switch_rejected(self, noisy):
        spec, s2, s1 = noisy
        _, sample = simulate_closed_loop(spec, 0.5, s2, s1, [1.0], SimConfig(n_paths=2, n_steps=100))
        other = solve_stage1(spec, 0.3, s2.P_at(0.3))
        with pytest.raises(DomainError):
            stationarity_check(spec, 0.5, s2, other, sample)


class TestDeterminism:
    def test_workers(self, noisy):
        spec, s2, s1 = noisy
        base = dict(n_paths=2 * sim.BLOCK_SIZE + 5, n_steps=100, seed=9)
        a, _ = simulate_closed_loop(spec, 0.5, s2, s1, [1.0], SimConfig(workers=1, **base))
        b, _ = simulate_closed_loop(spec, 0.5, s2, s1, [1.0], SimConfig(workers=3, **base))
        assert a == b

    def test_block_size_does_not_matter(self, noisy, monkeypatch):
        spec, s2, s1 = noisy
        law = OptimalFeedback(spec, s2, s1)
        cfg = SimConfig(n_paths=40, n_steps=100, seed=4)
        full, _, _ = path_costs(spec, 0.5, law, [1.0], cfg)
        monkeypatch.setattr(sim, "BLOCK_SIZE", 7)
        small, _, _ = path_costs(spec, 0.5, law, [1.0], cfg)
        np.testing.assert_array_equal(full, small)

    def test_prefix_is_stable(self, noisy):
        spec = noisy[0]
        a, _, _ = path_costs(spec, 0.5, zero_control, [1.0], SimConfig(n_paths=10, n_steps=50))
        b, _, _ = path_costs(spec, 0.5, zero_control, [1.0], SimConfig(n_paths=30, n_steps=50))
        np.testing.assert_array_equal(a, b[:10])

    def test_antithetic_reduces_nothing_when_deterministic(self, example):
        spec, s2, s1 = example
        rep, _ = simulate_closed_loop(spec, 0.5, s2, s1, [1.0, 0.0],
                                      SimConfig(n_paths=4, n_steps=200, antithetic=True))
        assert rep.std_error == 0.0


def test_report_file(tmp_path, noisy):
    spec, s2, s1 = noisy
    rep, sample = simulate_closed_loop(spec, 0.5, s2, s1, [1.0], SimConfig(n_paths=3, n_steps=20))
    rep.write(tmp_path / "r.txt")
    lines = (tmp_path / "r.txt").read_text().splitlines()
    assert lines[0].startswith("mean_cost = ")
    assert len(lines[0].split(" = ")[1].replace("-", "").replace(".", "").split("e")[0]) >= 16
    sample.write_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().startswith("path,stage,t,x_0,x_1,u_0")

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from winfree.dynamics import (
    DivergenceError,
    EnsembleState,
    ModelConfig,
    NotApplicableError,
    ShapeError,
    SimOptions,
    Trace,
    crossing_times,
    read_trace_csv,
    rhs,
    rhs_many,
    simulate,
    step,
    write_trace_csv,
)

import oracles

FIG5_ICS = np.array([math.pi / 2, 3 * math.pi / 4, 5 * math.pi / 6, 7 * math.pi / 8, 9 * math.pi / 10,
                     4 * math.pi / 3, 6 * math.pi / 5, 8 * math.pi / 7, 10 * math.pi / 9, 12 * math.pi / 11])


def test_rhs_uncoupled_returns_frequencies():
    cfg = ModelConfig(n=3, kappa=0.0, frequencies=[1.0, -2.0, 0.5])
    np.testing.assert_array_equal(rhs(cfg, EnsembleState(0.0, [0.3, 2.0, -1.0])), cfg.frequencies)


def test_rhs_single_at_zero_phase():
    cfg = ModelConfig.identical(1, 1.0, 5.0, 1)
    assert rhs(cfg, EnsembleState(0.0, [0.0]))[0] == 5.0


def test_rhs_two_oscillators_by_hand():
    cfg = ModelConfig(n=1, kappa=1.0, frequencies=[0.0, 0.0])
    v = rhs(cfg, EnsembleState(0.0, [math.pi / 2, 0.0]))
    assert v[0] == pytest.approx(-1.5, abs=1e-15)
    assert v[1] == pytest.approx(0.0, abs=1e-15)


@given(st.integers(1, 20), st.floats(0.0, 5.0), st.integers(1, 8), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_rhs_matches_double_loop(n, kappa, N, seed):
    rng = np.random.default_rng(seed)
    nu = rng.normal(size=N)
    th = rng.uniform(-10, 10, N)
    cfg = ModelConfig(n=n, kappa=kappa, frequencies=nu)
    np.testing.assert_allclose(rhs(cfg, EnsembleState(0.0, th)), oracles.naive_rhs(n, kappa, nu, th),
                               rtol=1e-12, atol=1e-12 * (1 + kappa * cfg.kernel.peak))


def test_rhs_shape_mismatch():
    cfg = ModelConfig.identical(2, 1.0, 1.0, 3)
    with pytest.raises(ShapeError):
        rhs(cfg, EnsembleState(0.0, [0.0, 1.0]))
    with pytest.raises(ShapeError):
        simulate(cfg, EnsembleState(0.0, [0.0]), SimOptions(t_end=1.0))


@pytest.mark.parametrize("integrator", ["euler", "rk4"])
def test_step_uncoupled_is_exact(integrator):
    cfg = ModelConfig(n=2, kappa=0.0, frequencies=[1.0, -3.0])
    s = step(cfg, EnsembleState(0.0, [0.5, 1.5]), 0.01, integrator)
    np.testing.assert_array_equal(s.phases, np.array([0.5, 1.5]) + 0.01 * np.array([1.0, -3.0]))
    assert s.t == 0.01


def test_euler_step_by_hand():
    cfg = ModelConfig.identical(1, 1.0, 5.0, 1)
    s = step(cfg, EnsembleState(0.0, [math.pi / 2]), 0.01)
    assert s.phases[0] == pytest.approx(math.pi / 2 + 0.04, abs=1e-15)


def test_step_bad_dt():
    cfg = ModelConfig.identical(1, 1.0, 5.0, 1)
    with pytest.raises(ValueError):
        step(cfg, EnsembleState(0.0, [0.0]), 0.0)


@pytest.mark.parametrize("integrator", ["euler", "rk4"])
def test_compiled_loop_matches_reference_steps(integrator):
    rng = np.random.default_rng(7)
    cfg = ModelConfig(n=4, kappa=1.3, frequencies=rng.uniform(0, 3, 6))
    th0 = rng.uniform(-3, 3, 6)
    tr = simulate(cfg, EnsembleState(0.0, th0), SimOptions(dt=1e-2, t_end=2.0, integrator=integrator))
    s = EnsembleState(0.0, th0)
    for _ in range(200):
        s = step(cfg, s, 1e-2, integrator)
    np.testing.assert_allclose(tr.phases[-1], s.phases, rtol=0, atol=1e-12)


def test_compiled_euler_matches_naive_oracle():
    rng = np.random.default_rng(11)
    nu = rng.uniform(0, 2, 5)
    th0 = rng.uniform(-3, 3, 5)
    cfg = ModelConfig(n=3, kappa=0.8, frequencies=nu)
    tr = simulate(cfg, EnsembleState(0.0, th0), SimOptions(dt=1e-2, t_end=1.0))
    ref = oracles.euler_reference(3, 0.8, nu, th0, 1e-2, 100)
    np.testing.assert_allclose(tr.phases[-1], ref, atol=1e-12)


def test_uncoupled_trace_is_linear():
    cfg = ModelConfig(n=2, kappa=0.0, frequencies=[1.0, 2.5, -0.7])
    th0 = np.array([0.1, -0.2, 3.0])
    tr = simulate(cfg, EnsembleState(0.0, th0), SimOptions(dt=1e-2, t_end=50.0, record_stride=10))
    exact = th0 + np.outer(tr.times, cfg.frequencies)
    assert np.max(np.abs(tr.phases - exact)) < 1e-13 * 5000


def test_simulate_is_bit_deterministic():
    rng = np.random.default_rng(3)
    cfg = ModelConfig(n=5, kappa=2.0, frequencies=rng.uniform(4, 6, 10))
    th0 = rng.uniform(-1, 1, 10)
    a = simulate(cfg, EnsembleState(0.0, th0), SimOptions(t_end=20.0))
    b = simulate(cfg, EnsembleState(0.0, th0), SimOptions(t_end=20.0))
    assert np.array_equal(a.phases, b.phases)


def test_sample_count_and_times():
    cfg = ModelConfig.identical(1, 1.0, 5.0, 2)
    opts = SimOptions(dt=0.01, t_end=1.0, record_stride=10)
    tr = simulate(cfg, EnsembleState(2.0, [0.0, 0.1]), opts)
    assert len(tr) == opts.n_samples == 11
    assert tr.times[0] == 2.0 and tr.times[-1] == pytest.approx(3.0)


def test_divergence_carries_partial_trace():
    cfg = ModelConfig(n=1, kappa=0.0, frequencies=[1e308, 1e308])
    with pytest.raises(DivergenceError) as err:
        simulate(cfg, EnsembleState(0.0, [0.5, 1.0]), SimOptions(dt=1.0, t_end=100.0))
    assert err.value.trace is not None
    assert np.all(np.isfinite(err.value.trace.phases))
    assert err.value.time == pytest.approx(2.0)


def test_trace_functionals_consistent():
    rng = np.random.default_rng(5)
    cfg = ModelConfig(n=2, kappa=1.0, frequencies=rng.uniform(0, 1, 7))
    tr = simulate(cfg, EnsembleState(0.0, rng.uniform(-2, 2, 7)), SimOptions(t_end=10.0))
    np.testing.assert_allclose(tr.D, 2 * tr.R, rtol=0, atol=1e-14)
    np.testing.assert_allclose(tr.A + tr.R, tr.phases.max(axis=1), atol=1e-14)
    np.testing.assert_allclose(tr.A - tr.R, tr.phases.min(axis=1), atol=1e-14)


@pytest.mark.parametrize("n", [1, 4, 10])
def test_velocity_bound(n):
    rng = np.random.default_rng(n)
    cfg = ModelConfig(n=n, kappa=1.7, frequencies=rng.uniform(-2, 2, 8))
    tr = simulate(cfg, EnsembleState(0.0, rng.uniform(-3, 3, 8)), SimOptions(t_end=20.0, record_stride=5))
    dev = np.abs(rhs_many(cfg, tr.phases) - cfg.frequencies)
    assert np.all(dev <= cfg.kappa * cfg.kernel.peak + 1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_order_preserved_for_identical_frequencies(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    cfg = ModelConfig.identical(n, float(rng.uniform(0.1, 3)), float(rng.uniform(-5, 5)), 2)
    th0 = np.sort(rng.uniform(-3, 3, 2))
    tr = simulate(cfg, EnsembleState(0.0, th0), SimOptions(dt=1e-2, t_end=10.0))
    assert np.all(tr.phases[:, 0] <= tr.phases[:, 1])


def test_sort_order_constant_larger_ensemble():
    rng = np.random.default_rng(99)
    cfg = ModelConfig.identical(3, 0.5, 2.0, 12)
    th0 = rng.uniform(-2, 2, 12)
    tr = simulate(cfg, EnsembleState(0.0, th0), SimOptions(t_end=30.0))
    order = np.argsort(th0)
    assert np.all(np.diff(tr.phases[:, order], axis=1) >= 0)


@pytest.mark.parametrize("n", [2, 5])
def test_midpoint_strictly_increasing(n):
    nu = 5.0
    cfg = ModelConfig.identical(n, 0.9 * nu / (2 ** n * ModelConfig.identical(n, 0, 1, 1).kernel.a_n), nu, 6)
    rng = np.random.default_rng(n)
    tr = simulate(cfg, EnsembleState(0.0, rng.uniform(-1, 1, 6)), SimOptions(t_end=20.0))
    assert np.all(np.diff(tr.A) > 0)


def test_spread_monotone_between_crossings():
    nu = 5.0
    n = 3
    k = ModelConfig.identical(n, 0, 1, 1).kernel
    cfg = ModelConfig.identical(n, 0.9 * nu / (2 * k.peak), nu, 5)
    th0 = np.linspace(-0.05, 0.05, 5)
    tr = simulate(cfg, EnsembleState(0.0, th0), SimOptions(t_end=15.0))
    cr = crossing_times(tr)
    checked = 0
    for a, b in zip(cr, cr[1:]):
        inside = (tr.times > a.time) & (tr.times < b.time) & (tr.R > 0) & (tr.R <= math.pi / 2)
        r = tr.R[inside]
        if r.size < 3:
            continue
        d = np.diff(r) * (1 if a.kind == "+" else -1)
        # near A = 2l pi + pi every phase sits where I_n ~ 0 and the true
        # increment drops below one ulp of the lifted phases
        floor = 8 * np.finfo(float).eps * np.max(np.abs(tr.phases))
        assert np.all(d > -floor)
        assert np.mean(d > 0) > 0.8
        checked += 1
    assert checked >= 6


def test_crossings_of_uniform_drift():
    nu = 2.0
    cfg = ModelConfig.identical(1, 0.0, nu, 2)
    tr = simulate(cfg, EnsembleState(0.0, [-0.1, 0.1]), SimOptions(dt=1e-3, t_end=10.0))
    cr = crossing_times(tr)
    kinds = [c.kind for c in cr]
    assert kinds == ["+", "-", "+", "-", "+", "-", "+"][: len(kinds)]
    for c in cr:
        v = 2 * c.level * math.pi + (math.pi / 2 if c.kind == "+" else -math.pi / 2)
        assert c.time == pytest.approx(v / nu, abs=1e-12)


def test_crossings_refinement():
    nu = 5.0
    k = ModelConfig.identical(4, 0, 1, 1).kernel
    cfg = ModelConfig.identical(4, 0.9 * nu / (2 * k.peak), nu, 4)
    th0 = [-0.3, -0.1, 0.05, 0.2]
    coarse = crossing_times(simulate(cfg, EnsembleState(0.0, th0), SimOptions(dt=1e-3, t_end=10.0, record_stride=20)))
    fine = crossing_times(simulate(cfg, EnsembleState(0.0, th0), SimOptions(dt=1e-3, t_end=10.0, record_stride=1)))
    assert [(c.level, c.kind) for c in coarse] == [(c.level, c.kind) for c in fine]
    for c, f in zip(coarse, fine):
        assert abs(c.time - f.time) <= 20 * 1e-3


def test_crossings_need_increasing_midpoint():
    tr = Trace(np.array([0.0, 1.0, 2.0]), np.array([[0.0], [1.0], [0.5]]), n=1)
    with pytest.raises(NotApplicableError):
        crossing_times(tr)


def test_fig5_setup_diameter_decays_in_steps():
    cfg = ModelConfig.identical(10, 1.0, 5.0, 10)
    tr = simulate(cfg, EnsembleState(0.0, FIG5_ICS), SimOptions(t_end=100.0))
    assert tr.D[-1] < tr.D[0]
    # plunges are concentrated: most of the decrease happens in a small
    # fraction of the time
    drops = -np.minimum(np.diff(tr.D), 0)
    top = np.sort(drops)[::-1]
    share = top[: drops.size // 10].sum() / drops.sum()
    assert share > 0.5


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cfg = ModelConfig(n=2, kappa=1.0, frequencies=rng.uniform(0, 1, 3))
    tr = simulate(cfg, EnsembleState(0.0, rng.uniform(-1, 1, 3)), SimOptions(t_end=1.0, record_stride=10))
    p = tmp_path / "trace.csv"
    write_trace_csv(tr, p)
    header = p.read_text().splitlines()[0]
    assert header == "t,theta_0,theta_1,theta_2,A,R,D,Inc"
    back = read_trace_csv(p, n=2)
    assert np.array_equal(back.phases, tr.phases)
    assert np.array_equal(back.times, tr.times)
    assert np.array_equal(back.mean_influence, tr.mean_influence)

import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from amgeredist.amge import HierarchyConfig, build_hierarchy
from amgeredist.darcy import SolveError
from amgeredist.meshtopo import build_mesh
from amgeredist.mlmc import (LevelStats, MlmcProblem, RateFit, classify_regime, fit_rates, mc_estimate,
                             mc_sample_requirement, mlmc_estimate, optimal_real_samples, optimal_samples, run_mlmc,
                             scaled_root_cost, screen_levels, total_cost)
from amgeredist.sampler import FieldParams, TAG_FIELD, make_stream

positive = st.floats(1e-6, 1e3)


def test_mc_estimate_trivial():
    assert mc_estimate([1, 1, 1])[:2] == (1.0, 0.0)
    assert mc_estimate([0, 2])[:2] == (1.0, 2.0)
    with pytest.raises(ValueError):
        mc_estimate([1.0])


def test_mc_estimate_normal_draws():
    x = np.random.default_rng(0).standard_normal(10_000)
    mean, var, se = mc_estimate(x)
    assert abs(mean) <= 4 / math.sqrt(10_000)
    assert se == pytest.approx(math.sqrt(var / 10_000))


def test_mc_sample_requirement():
    assert mc_sample_requirement(0.0, 0.1) == 1
    assert mc_sample_requirement(2.0, 0.1) == 400
    with pytest.raises(ValueError):
        mc_sample_requirement(1.0, 0.0)


@given(st.floats(1e-8, 10.0), st.floats(1e-3, 1.0))
def test_mc_requirement_plug_back(V, eps):
    N = mc_sample_requirement(V, eps)
    assert V / N <= eps ** 2 / 2 * (1 + 1e-12)


def test_optimal_samples_two_levels():
    eps = 0.05
    n_real = optimal_real_samples([4.0, 1.0], [1.0, 4.0], eps)
    np.testing.assert_allclose(n_real, [16 / eps ** 2, 4 / eps ** 2], rtol=1e-14)
    assert 4 / n_real[0] + 1 / n_real[1] == pytest.approx(eps ** 2 / 2, rel=1e-14)
    assert total_cost(n_real, [1.0, 4.0]) == pytest.approx(32 / eps ** 2, rel=1e-14)


def test_single_level_matches_mc():
    plan = optimal_samples([3.0], [7.0], 0.02)
    assert plan.N == (mc_sample_requirement(3.0, 0.02),)


def test_equal_levels_equal_samples():
    plan = optimal_samples([2.0] * 3, [5.0] * 3, 0.1)
    assert len(set(plan.N)) == 1


def test_nonpositive_inputs_rejected():
    with pytest.raises(ValueError):
        optimal_samples([1.0, 0.0], [1.0, 1.0], 0.1)
    with pytest.raises(ValueError):
        optimal_samples([1.0], [1.0], -0.1)


def test_total_cost_simple_and_additive():
    assert total_cost([10], [2.0]) == 20.0
    N, C = [3, 5, 7], [1.0, 2.0, 4.0]
    assert total_cost(N, C) == total_cost(N[:1], C[:1]) + total_cost(N[1:], C[1:])


@given(st.lists(st.tuples(positive, positive), min_size=1, max_size=6), st.floats(1e-3, 1.0))
def test_split_and_ceiling(vc, eps):
    V, C = zip(*vc)
    plan = optimal_samples(V, C, eps)
    exact = sum(v / n for v, n in zip(V, plan.N_real))
    assert exact == pytest.approx(eps ** 2 / 2, rel=1e-12)
    assert plan.sampling_error <= eps ** 2 / 2 * (1 + 1e-12)
    assert all(isinstance(n, int) and n >= 1 for n in plan.N)
    identity = 2 / eps ** 2 * sum(math.sqrt(c * v) for v, c in zip(V, C)) ** 2
    assert total_cost(plan.N_real, C) == pytest.approx(identity, rel=1e-12)


@given(st.lists(st.tuples(positive, positive), min_size=2, max_size=5), st.floats(1e-3, 1.0), st.data())
def test_kkt_perturbation(vc, eps, data):
    V, C = map(np.array, zip(*vc))
    n = optimal_real_samples(V, C, eps)
    i = data.draw(st.integers(0, len(V) - 1))
    j = data.draw(st.integers(0, len(V) - 1))
    assume(i != j)
    sign = data.draw(st.sampled_from([-1.0, 1.0]))
    m = n.copy()
    m[i] = n[i] * (1 + sign * 0.01)
    budget = V[i] / n[i] + V[j] / n[j] - V[i] / m[i]
    assume(budget > 0)
    m[j] = V[j] / budget
    base = float(np.dot(n, C))
    assert float(np.dot(m, C)) >= base * (1 - 1e-9)


def test_scaled_root_cost_empty_sum():
    fit = RateFit(0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2)
    assert scaled_root_cost(4.0, [9.0], fit, [100], 0) == pytest.approx(6.0)


def test_scaled_root_cost_decreasing_for_geometric_decay():
    M = [8.0 ** (8 - l) for l in range(6)]
    fit = RateFit(0.5, 2 / 3, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2)
    R = [scaled_root_cost(1.0, M, fit, M, L) for L in range(6)]
    expect = [math.sqrt(M[L]) + sum(M[l] ** (1 / 6) for l in range(L)) for L in range(6)]
    np.testing.assert_allclose(R, expect, rtol=1e-13)
    assert all(b < a for a, b in zip(R, R[1:]))


def test_scaled_root_cost_no_decay_never_improves():
    M = [4096.0 / 8 ** l for l in range(5)]
    fit = RateFit(0.5, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2)
    R, extend = screen_levels([1.0] * 5, [3.0] * 5, fit, M)
    assert all(b >= a for a, b in zip(R, R[1:]))
    assert not any(extend)


def test_scaled_root_cost_missing_levels():
    fit = RateFit(0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2)
    with pytest.raises(ValueError):
        scaled_root_cost(1.0, [1.0], fit, [10, 1], 1)


def test_root_cost_identity():
    eps, beta, c2 = 0.01, 2 / 3, 3.0
    M = [4096.0, 512.0, 64.0]
    C = [50.0, 7.0, 1.0]
    V_QL = 0.2
    fit = RateFit(1 / 3, beta, 1.0, 1.0, c2, 1.0, 1.0, 1.0, 1.0, 2)
    V = [c2 * M[0] ** -beta, c2 * M[1] ** -beta, V_QL]
    R = scaled_root_cost(V_QL, C, fit, M, 2)
    n = optimal_real_samples(V, C, eps)
    assert float(np.dot(n, C)) == pytest.approx(2 / eps ** 2 * R ** 2, rel=1e-12)


def test_fit_rates_exact():
    M = np.array([4096.0, 512.0, 64.0, 8.0])
    fit = fit_rates(M ** (-1 / 3), 5 * M ** (-2 / 3), 2 * M, M)
    assert fit.alpha == pytest.approx(1 / 3, abs=1e-12)
    assert fit.beta == pytest.approx(2 / 3, abs=1e-12)
    assert fit.c2 == pytest.approx(5.0, rel=1e-12)
    assert fit.gamma == pytest.approx(1.0, abs=1e-12)
    assert fit.c3 == pytest.approx(2.0, rel=1e-12)


def test_fit_ignores_coarsest_level():
    M = np.array([4096.0, 512.0, 64.0])
    mean = M ** -0.5
    mean[-1] = 123.0  # Q_L, not a difference
    assert fit_rates(mean, M ** -1.0, M, M).alpha == pytest.approx(0.5, abs=1e-12)


def test_fit_needs_levels():
    with pytest.raises(ValueError):
        fit_rates([1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [10, 1])


def _fit(alpha, beta, gamma):
    return RateFit(alpha, beta, gamma, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2)


def test_regimes():
    assert classify_regime(_fit(1.0, 1.0, 0.5)).label == "ε⁻²"
    r = classify_regime(_fit(1.0, 1.0, 1.0))
    assert r.label == "ε⁻²(log ε)²" and r.log_power == 2
    assert classify_regime(_fit(1.0, 1.0, 1.0 + 5e-7)).kind == "beta_eq_gamma"
    r = classify_regime(_fit(1 / 3, 2 / 3, 1.0))
    assert r.kind == "beta_lt_gamma" and r.exponent == pytest.approx(-3.0, abs=1e-12)


def test_regime_alpha_warning():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        r = classify_regime(_fit(0.1, 1.0, 1.0))
    assert not r.alpha_ok and any(issubclass(x.category, RuntimeWarning) for x in w)


# sampling engine on the 16 x 16 hierarchy --------------------------------------------------

@pytest.fixture(scope="module")
def problem(mesh16, hier16):
    return MlmcProblem(mesh16, hier16, FieldParams(sigma=0.5), seed=11)


def test_pair_shares_one_field(problem):
    for i in range(10):
        _, u0 = problem.sampler.fine_field(make_stream(problem.seed, 0, i, TAG_FIELD))
        qf, qc = problem.pair(0, i)
        assert qf == problem.q_level(0, u0)
        assert qc == problem.q_level(1, u0)


def test_telescoping_per_seed(problem):
    for i in range(10):
        _, u0 = problem.sampler.fine_field(make_stream(problem.seed, 0, i, TAG_FIELD))
        q = [problem.q_level(l, u0) for l in range(3)]
        ys = [q[0] - q[1], q[1] - q[2], q[2]]
        assert sum(ys) == pytest.approx(q[0], abs=1e-14)


def test_level_role_consistency(problem):
    # Q_1 as the coarse member of Y_0 and as the fine member of Y_1, same field
    for i in range(5):
        _, u0 = problem.sampler.fine_field(make_stream(problem.seed, 0, i, TAG_FIELD))
        coarse_role = problem.pair(0, i)[1]
        fine_role = problem.q_level(1, u0)
        assert coarse_role == fine_role


def test_coarsest_y_is_q(problem):
    _, stats = mlmc_estimate(problem, [4, 4, 6])
    assert stats[-1].mean_Y == stats[-1].mean_Q and stats[-1].var_Y == stats[-1].var_Q
    assert all(s.var_Y >= 0 and s.var_Q >= 0 for s in stats)


def test_threads_give_identical_results(mesh16, hier16):
    a = MlmcProblem(mesh16, hier16, FieldParams(sigma=0.5), seed=4, threads=0)
    b = MlmcProblem(mesh16, hier16, FieldParams(sigma=0.5), seed=4, threads=4)
    assert mlmc_estimate(a, [12, 8, 8])[0] == mlmc_estimate(b, [12, 8, 8])[0]


def test_single_level_is_plain_mc(mesh16):
    h = build_hierarchy(mesh16, HierarchyConfig(n_levels=1))
    p = MlmcProblem(mesh16, h, FieldParams(sigma=0.5), seed=2)
    est, stats = mlmc_estimate(p, [30])
    qf, _ = p.samples(0)
    mean, var, _ = mc_estimate(qf)
    assert est == mean and stats[0].var_Y == var


def test_deterministic_permeability(mesh16, hier16):
    p = MlmcProblem(mesh16, hier16, FieldParams(sigma=0.0), seed=0)
    result = run_mlmc(p, 0.01, n_pilot=3)
    assert result.estimate == pytest.approx(1.0, abs=1e-12)
    assert all(s.var_Y == pytest.approx(0.0, abs=1e-28) for s in result.stats[:-1])
    # zero-variance levels stay at the floor
    assert [s.n_samples for s in result.stats] == [3, 3, 3]


def test_adaptive_run_meets_error_bound(problem):
    result = run_mlmc(problem, 0.01, n_pilot=10)
    assert result.sampling_error <= 0.01 ** 2 / 2
    assert all(s.n_samples >= n for s, n in zip(result.stats, result.plan.N))


def test_solver_failure_reports_sample(mesh16, hier16, monkeypatch):
    p = MlmcProblem(mesh16, hier16, FieldParams(sigma=0.5), seed=1)

    def broken(*args, **kwargs):
        raise SolveError("boom")

    monkeypatch.setattr(p.ops[1], "solve", broken)
    with pytest.raises(RuntimeError, match="sample 0 of level 0"):
        p.pair(0, 0)


def test_cost_models(mesh16, hier16):
    ops = MlmcProblem(mesh16, hier16, cost_model="ops")
    c = ops.solve_costs()
    assert c == MlmcProblem(mesh16, hier16, cost_model="ops").solve_costs()
    assert all(a > b for a, b in zip(c, c[1:]))
    wall = MlmcProblem(mesh16, hier16, cost_model="walltime", timing_solves=2).solve_costs()
    assert all(x > 0 for x in wall)
    with pytest.raises(ValueError):
        MlmcProblem(mesh16, hier16, cost_model="bogus")


def test_level_stats_from_samples():
    s = LevelStats.from_samples(0, 16, 1, [1.0, 3.0], [0.5, 0.5], 2.0, 1.0)
    assert (s.mean_Q, s.var_Q, s.mean_Y, s.var_Y, s.n_samples) == (2.0, 2.0, 0.5, 0.0, 2)

from __future__ import annotations

import numpy as np
import pytest

from conftest import single_link, two_link
from routegame.calculus import FlowProfile, check_conditions
from routegame.equilibrium import (
    ConditionsUnverified,
    NotConverged,
    project_feasible,
    solve_equilibrium,
    solve_equilibrium_batch,
    vi_gap,
    wardrop_residual,
)
from routegame.netmodel import (
    DelayPoly,
    Link,
    Network,
    OdSpec,
    enumerate_paths,
    feasibility_residual,
)
from routegame.oracle import brute_force_equilibrium


def _share(net, alpha):
    return tuple(od.with_share(alpha) for od in net.od_pairs)


class TestProjection:
    def fixture(self):
        net = two_link((0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0), 1.0)
        return net, enumerate_paths(net), net.od_pairs

    def test_identity_on_feasible(self):
        _, inc, ods = self.fixture()
        y = np.array([0.3, 0.7, 0.0, 0.0])
        z = project_feasible(inc, ods, y)
        np.testing.assert_allclose(z.stacked(), y, atol=1e-15)

    def test_symmetric_split(self):
        _, inc, ods = self.fixture()
        z = project_feasible(inc, ods, np.array([2.0, 2.0, 0.0, 0.0]))
        np.testing.assert_allclose(z.zS, [0.5, 0.5])

    def test_threshold_clips_to_vertex(self):
        _, inc, ods = self.fixture()
        z = project_feasible(inc, ods, np.array([1.5, 0.0, 0.0, 0.0]))
        np.testing.assert_allclose(z.zS, [1.0, 0.0])

    def test_idempotent_and_feasible_random(self):
        net = two_link((0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0), 2.0, 0.3)
        inc = enumerate_paths(net)
        ods = net.od_pairs
        rng = np.random.default_rng(17)
        for _ in range(50):
            y = rng.uniform(-2, 3, size=4)
            z = project_feasible(inc, ods, y)
            assert feasibility_residual(inc, ods, z) < 1e-12
            z2 = project_feasible(inc, ods, z.stacked())
            np.testing.assert_allclose(z2.stacked(), z.stacked(), atol=1e-14)

    def test_wrong_length(self):
        _, inc, ods = self.fixture()
        with pytest.raises(ValueError):
            project_feasible(inc, ods, np.zeros(3))


class TestWardropResidual:
    def fixture(self, alpha=0.0):
        net = two_link((0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0), 2.0)
        return net, enumerate_paths(net), _share(net, alpha)

    def test_wardrop_point(self):
        net, inc, ods = self.fixture()
        z = FlowProfile(zS=np.array([1.5, 0.5]), zC=np.zeros(2))
        assert wardrop_residual(net, inc, ods, z) == pytest.approx(0.0, abs=1e-12)

    def test_all_on_one_link(self):
        net, inc, ods = self.fixture()
        z = FlowProfile(zS=np.array([2.0, 0.0]), zC=np.zeros(2))
        assert wardrop_residual(net, inc, ods, z) == pytest.approx(1.0)

    def test_fleet_marginal_equalization(self):
        net, inc, ods = self.fixture(alpha=1.0)
        z = FlowProfile(zS=np.zeros(2), zC=np.array([1.25, 0.75]))
        assert wardrop_residual(net, inc, ods, z) == pytest.approx(0.0, abs=1e-12)

    def test_infeasible_rejected(self):
        net, inc, ods = self.fixture()
        z = FlowProfile(zS=np.array([1.0, 0.5]), zC=np.zeros(2))
        with pytest.raises(ValueError):
            wardrop_residual(net, inc, ods, z)


class TestViGap:
    def fixture(self, alpha=0.0):
        net = two_link((0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0), 2.0)
        return net, enumerate_paths(net), _share(net, alpha)

    def test_zero_at_equilibrium(self):
        net, inc, ods = self.fixture()
        z = FlowProfile(zS=np.array([1.5, 0.5]), zC=np.zeros(2))
        assert vi_gap(net, inc, ods, z) <= 1e-8

    def test_worst_assignment(self):
        net, inc, ods = self.fixture()
        z = FlowProfile(zS=np.array([0.0, 2.0]), zC=np.zeros(2))
        assert vi_gap(net, inc, ods, z) == pytest.approx(6.0)

    def test_zero_demand(self):
        net = two_link((0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0), 0.0)
        inc = enumerate_paths(net)
        z = FlowProfile(zS=np.zeros(2), zC=np.zeros(2))
        assert vi_gap(net, inc, net.od_pairs, z) == 0.0


class TestSolveEquilibrium:
    def case_b(self):
        net = two_link((0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0), 2.0)
        return net, enumerate_paths(net)

    def test_case_b_selfish_only(self):
        net, inc = self.case_b()
        res = solve_equilibrium(net, inc, _share(net, 0.0))
        np.testing.assert_allclose(res.f_star.F, [1.5, 0.5], atol=1e-7)
        assert res.theta == pytest.approx(1.5, abs=1e-7)
        assert res.converged

    def test_case_b_quarter_share(self):
        net, inc = self.case_b()
        res = solve_equilibrium(net, inc, _share(net, 0.25))
        np.testing.assert_allclose(res.f_star.fC, [0.25, 0.25], atol=1e-7)
        np.testing.assert_allclose(res.f_star.fS, [1.25, 0.25], atol=1e-7)
        np.testing.assert_allclose(res.f_star.F, [1.5, 0.5], atol=1e-7)
        assert res.mu == pytest.approx(1.75, abs=1e-7)

    def test_case_b_half_share(self):
        net, inc = self.case_b()
        res = solve_equilibrium(net, inc, _share(net, 0.5))
        np.testing.assert_allclose(res.f_star.fC, [0.5, 0.5], atol=1e-7)
        np.testing.assert_allclose(res.f_star.fS, [1.0, 0.0], atol=1e-7)
        assert res.mu == pytest.approx(2.0, abs=1e-7)

    def test_case_b_full_fleet(self):
        net, inc = self.case_b()
        res = solve_equilibrium(net, inc, _share(net, 1.0))
        np.testing.assert_allclose(res.f_star.F, [1.25, 0.75], atol=1e-7)
        assert res.mu == pytest.approx(2.5, abs=1e-7)

    def test_case_a_closed_forms(self):
        net = two_link((0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0), 1.0)
        inc = enumerate_paths(net)
        res = solve_equilibrium(net, inc, _share(net, 0.0))
        np.testing.assert_allclose(res.f_star.F, [1.0, 0.0], atol=1e-7)
        res = solve_equilibrium(net, inc, _share(net, 0.5))
        np.testing.assert_allclose(res.f_star.fC, [0.375, 0.125], atol=1e-7)
        np.testing.assert_allclose(res.f_star.fS, [0.5, 0.0], atol=1e-7)
        res = solve_equilibrium(net, inc, _share(net, 1.0))
        np.testing.assert_allclose(res.f_star.F, [0.75, 0.25], atol=1e-7)

    def test_certificates_hold_at_solution(self):
        from routegame.calculus import operator_H
        net, inc = self.case_b()
        ods = _share(net, 0.4)
        res = solve_equilibrium(net, inc, ods, tol=1e-8)
        assert res.wardrop_residual <= 1e-8
        assert feasibility_residual(inc, ods, res.z_star) <= 3e-10
        fTH = res.f_star.stacked() @ operator_H(net, res.f_star)
        assert res.vi_gap <= 1e-8 * (1.0 + fTH)

    def test_load_unique_across_starts(self):
        # identical loads from the uniform start and an all-on-first start
        net = two_link((0.2, 0.8, 0.1, 0.02), (1.0, 0.4, 0.0, 0.05), 2.0)
        inc = enumerate_paths(net)
        ods = _share(net, 0.35)
        res_uniform = solve_equilibrium(net, inc, ods, tol=1e-9)
        first = FlowProfile(
            zS=np.array([ods[0].demand_selfish, 0.0]),
            zC=np.array([ods[0].demand_fleet, 0.0]),
        )
        res_first = solve_equilibrium(net, inc, ods, tol=1e-9, init=first)
        np.testing.assert_allclose(
            res_uniform.f_star.stacked(), res_first.f_star.stacked(),
            atol=1e-8)

    def test_wardrop_conditions_per_class(self):
        # every used selfish path sits at theta, every used fleet path at mu
        net = two_link((0.1, 1.0, 0.2, 0.0), (0.8, 0.6, 0.0, 0.05), 2.0)
        inc = enumerate_paths(net)
        ods = _share(net, 0.45)
        res = solve_equilibrium(net, inc, ods, tol=1e-9)
        from routegame.calculus import coefficient_table, poly_eval
        coeffs = coefficient_table(net)
        F = res.f_star.F
        d = poly_eval(coeffs, F, 0)
        m = d + res.f_star.fC * poly_eval(coeffs, F, 1)
        dP = d @ inc.matrix
        mP = m @ inc.matrix
        eps = 1e-6 * 2.0
        for p in range(inc.n_paths):
            if res.z_star.zS[p] > eps:
                assert dP[p] == pytest.approx(res.theta, abs=1e-8)
            if res.z_star.zC[p] > eps:
                assert mP[p] == pytest.approx(res.mu, abs=1e-8)

    def test_matches_oracle(self):
        net, inc = self.case_b()
        ods = _share(net, 0.6)
        res = solve_equilibrium(net, inc, ods)
        oracle_load, cert = brute_force_equilibrium(net, inc, ods, 2001)
        assert cert < 1e-3
        step = 2.0 / 2000
        assert np.max(np.abs(
            res.f_star.stacked() - oracle_load.stacked())) <= 2 * step

    def test_not_converged_carries_result(self):
        net, inc = self.case_b()
        with pytest.raises(NotConverged) as exc_info:
            solve_equilibrium(net, inc, _share(net, 0.0), max_iters=2)
        result = exc_info.value.result
        assert not result.converged
        assert result.iterations == 2
        assert result.wardrop_residual > 0

    def test_conditions_gate(self):
        net, inc = self.case_b()
        bad = check_conditions(
            single_link(1.0, coeffs=(1.0, 0.0, 0.0, 1.0)), 2.0)
        assert not bad.strong_mono_ok
        with pytest.raises(ConditionsUnverified):
            solve_equilibrium(net, inc, _share(net, 0.0), conditions=bad)
        res = solve_equilibrium(
            net, inc, _share(net, 0.0), conditions=bad, force=True,
            step=0.2)
        assert res.converged

    def test_zero_demand(self):
        net = two_link((0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0), 0.0)
        inc = enumerate_paths(net)
        res = solve_equilibrium(net, inc, net.od_pairs)
        assert res.converged
        np.testing.assert_allclose(res.f_star.F, [0.0, 0.0])
        assert res.theta == pytest.approx(0.0)

    def test_multi_od(self):
        # two OD pairs with disjoint link sets solve to their separate
        # Wardrop points
        links = (
            Link("a1", "o1", "d1", DelayPoly((0.0, 1.0, 0.0, 0.0))),
            Link("a2", "o1", "d1", DelayPoly((1.0, 1.0, 0.0, 0.0))),
            Link("b1", "o2", "d2", DelayPoly((0.0, 2.0, 0.0, 0.0))),
            Link("b2", "o2", "d2", DelayPoly((0.5, 1.0, 0.0, 0.0))),
        )
        net = Network(
            nodes=("o1", "d1", "o2", "d2"),
            links=links,
            od_pairs=(OdSpec("o1", "d1", 2.0, 0.0),
                      OdSpec("o2", "d2", 1.0, 0.0)),
        )
        inc = enumerate_paths(net)
        res = solve_equilibrium(net, inc, net.od_pairs)
        np.testing.assert_allclose(res.f_star.F[:2], [1.5, 0.5], atol=1e-7)
        # second OD: 2 F3 = 0.5 + F4, F3 + F4 = 1 -> F3 = 0.5, F4 = 0.5
        np.testing.assert_allclose(res.f_star.F[2:], [0.5, 0.5], atol=1e-7)


class TestBatchSolver:
    def test_batch_matches_sequential(self):
        net = two_link((0.1, 0.9, 0.15, 0.01), (0.7, 0.5, 0.05, 0.02), 2.0)
        inc = enumerate_paths(net)
        alphas = [0.0, 0.3, 0.7, 1.0]
        batch = solve_equilibrium_batch(net, inc, net.od_pairs[0], alphas)
        for alpha, res in zip(alphas, batch):
            single = solve_equilibrium(net, inc, _share(net, alpha))
            np.testing.assert_allclose(
                res.f_star.stacked(), single.f_star.stacked(), atol=1e-7)
            assert res.converged

    def test_batch_reports_per_share_nonconvergence(self):
        net = two_link((0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0), 2.0)
        inc = enumerate_paths(net)
        batch = solve_equilibrium_batch(
            net, inc, net.od_pairs[0], [0.0, 0.5], max_iters=2)
        assert all(not r.converged for r in batch)

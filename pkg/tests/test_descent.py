"""Projection, retraction, line search, and the descent driver."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adjopt.descent import (
    DegenerateNormalError,
    DescentOptions,
    LineSearchFailure,
    ProblemAdapter,
    bracket_minimum,
    brent_minimize,
    descend,
    pr_cg_direction,
    project_tangent,
    retract_rescale,
)
from adjopt.problems import HeatProblem


def dot(a, b):
    return float(np.dot(a, b))


def toy_adapter(target):
    return ProblemAdapter(
        eval_objective=lambda p: 0.5 * dot(p - target, p - target),
        eval_constraint=lambda p: dot(p, p),
        gradient_l2=lambda p: p - target,
        normal_l2=lambda p: 2.0 * p,
        smooth=lambda g: g,
        inner_l2=dot,
        inner_h=dot,
        constraint_level=1.0,
    )


class TestProjectTangent:
    def test_already_tangent(self):
        rng = np.random.default_rng(0)
        n = rng.normal(size=20)
        phi = rng.normal(size=20)
        phi -= dot(phi, n) / dot(n, n) * n
        out = project_tangent(phi, n, dot)
        np.testing.assert_allclose(out, phi, atol=1e-14)

    def test_pure_normal_annihilated(self):
        n = np.linspace(1, 2, 15)
        out = project_tangent(3.0 * n, n, dot)
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    @settings(max_examples=50)
    @given(seed=st.integers(0, 2**31))
    def test_idempotent_and_orthogonal(self, seed):
        rng = np.random.default_rng(seed)
        phi = rng.normal(size=101)
        n = rng.normal(size=101)
        p1 = project_tangent(phi, n, dot)
        p2 = project_tangent(p1, n, dot)
        scale = np.linalg.norm(phi) * np.linalg.norm(n)
        assert abs(dot(p1, n)) <= 1e-10 * max(scale, 1e-30)
        np.testing.assert_allclose(p2, p1, atol=1e-12 * max(1.0, np.linalg.norm(p1)))

    def test_degenerate_normal(self):
        with pytest.raises(DegenerateNormalError):
            project_tangent(np.ones(10), np.zeros(10), dot)


class TestRetraction:
    def test_identity_on_manifold(self):
        ad = toy_adapter(np.zeros(4))
        phi = np.array([0.5, 0.5, 0.5, 0.5])  # |phi|^2 = 1 = level
        np.testing.assert_allclose(retract_rescale(phi, ad), phi, rtol=1e-14)

    def test_quadratic_homogeneity(self):
        ad = toy_adapter(np.zeros(4))
        phi = np.array([1.0, 1.0, 1.0, 1.0])  # constraint 4 = 4 * level
        np.testing.assert_allclose(retract_rescale(phi, ad), phi / 2.0, rtol=1e-14)

    def test_exactness_on_pde_constraint(self):
        prob = HeatProblem.build(nx=32, nt=48, homogeneous_ic=True)
        ad = prob.adapter()
        rng = np.random.default_rng(1)
        phi = prob.phi0 + 0.3 * rng.normal(size=prob.phi0.size)
        out = retract_rescale(phi, ad)
        assert ad.eval_constraint(out) == pytest.approx(prob.cfg.E0, rel=1e-10)

    def test_nonpositive_constraint_rejected(self):
        ad = toy_adapter(np.zeros(4))
        with pytest.raises(RuntimeError):
            retract_rescale(np.zeros(4), ad)


class TestBrent:
    def test_quadratic(self):
        tau, val = brent_minimize(lambda t: (t - 2.0) ** 2, (0.0, 1.0, 5.0), 1e-10, 60)
        assert tau == pytest.approx(2.0, abs=1e-6)
        assert val == pytest.approx(0.0, abs=1e-10)

    def test_cosine(self):
        tau, _ = brent_minimize(np.cos, (2.0, 3.0, 4.0), 1e-10, 60)
        assert tau == pytest.approx(np.pi, abs=1e-6)

    def test_monotone_bracketing_fails(self):
        with pytest.raises(LineSearchFailure):
            bracket_minimum(lambda t: t, f0=0.0, step=1.0, grow=2.0, max_evals=20)

    def test_bracket_then_minimize(self):
        f = lambda t: (t - 0.37) ** 2
        a, b, fa, fb = bracket_minimum(f, f0=f(0.0), step=0.1, grow=2.0, max_evals=30)
        assert b is not None and fa < min(f(0.0), fb)
        tau, _ = brent_minimize(f, (0.0, a, b), 1e-8, 60)
        assert tau == pytest.approx(0.37, abs=1e-4)

    def test_cap_returns_endpoint_on_monotone_descent(self):
        f = lambda t: -t
        a, b, fa, fb = bracket_minimum(f, f0=0.0, step=0.5, grow=2.0, max_evals=30, cap=3.0)
        assert b is None and a == 3.0


class TestPrCg:
    def test_first_iteration_steepest(self):
        g = np.array([1.0, -2.0])
        np.testing.assert_array_equal(pr_cg_direction(g, None, None, dot), -g)

    def test_stationary_gradient_beta_zero(self):
        g = np.array([1.0, -2.0, 0.5])
        d_prev = np.array([0.3, 0.3, 0.3])
        np.testing.assert_allclose(pr_cg_direction(g, g, d_prev, dot), -g)

    @settings(max_examples=50)
    @given(seed=st.integers(0, 2**31))
    def test_descent_direction(self, seed):
        rng = np.random.default_rng(seed)
        g_now = rng.normal(size=30)
        g_prev = rng.normal(size=30)
        d_prev = -g_prev
        d = pr_cg_direction(g_now, g_prev, d_prev, dot)
        assert dot(d, g_now) < 0


class TestDescend:
    def test_quadratic_converges(self):
        target = np.linspace(-1.0, 2.0, 31)
        phi, trace = descend(toy_adapter(target), np.zeros(31),
                             DescentOptions(max_iters=50, rel_tol=1e-14))
        assert trace.objectives[-1] < 1e-10
        assert len(trace.records) - 1 <= 50
        np.testing.assert_allclose(phi, target, atol=1e-4)

    def test_monotone_objective(self):
        prob = HeatProblem.build(nx=40, nt=60, homogeneous_ic=False)
        _, trace = descend(prob.adapter(), prob.phi0,
                           DescentOptions(max_iters=20, rel_tol=1e-12))
        assert np.all(np.diff(trace.objectives) <= 0)

    def test_constrained_retraction_exact(self):
        prob = HeatProblem.build(nx=32, nt=48, homogeneous_ic=True)
        opts = DescentOptions(max_iters=12, rel_tol=1e-12, constrained=True,
                              use_pr_cg=False)
        _, trace = descend(prob.adapter(), prob.phi0, opts)
        ratios = trace.constraints / prob.cfg.E0
        assert np.max(np.abs(ratios - 1.0)) < 1e-10
        assert trace.objectives[-1] < trace.objectives[0]

    def test_constrained_drift_controlled(self):
        prob = HeatProblem.build(nx=32, nt=48, homogeneous_ic=False)
        opts = DescentOptions(max_iters=10, rel_tol=1e-12, constrained=True,
                              use_pr_cg=False)
        _, trace = descend(prob.adapter(), prob.phi0, opts)
        drift = np.abs(trace.constraints / prob.cfg.E0 - 1.0)
        assert drift[-1] < 0.02  # capped steps keep drift small

    def test_trace_records_well_formed(self):
        target = np.ones(5)
        _, trace = descend(toy_adapter(target), np.zeros(5),
                           DescentOptions(max_iters=10, rel_tol=1e-10))
        ns = [r.n for r in trace.records]
        assert ns == list(range(len(ns)))
        assert trace.records[0].step == 0.0
        assert np.isfinite(trace.records[0].grad_norm)


class TestDriftOrder:
    def test_single_step_drift_quadratic_in_tau(self):
        # from a point on the manifold, projected steps violate the
        # constraint at second order in the step size
        prob = HeatProblem.build(nx=50, nt=100, homogeneous_ic=False)
        ad = prob.adapter()
        phi = prob.phi0
        e_base = ad.eval_constraint(phi)
        ad.constraint_level = e_base  # exactly on the manifold
        g = ad.sobolev_gradient(phi)
        n = ad.sobolev_normal(phi)
        d = -project_tangent(g, n, ad.inner_h)
        tau0 = 1.0
        taus = np.array([tau0, tau0 / 2, tau0 / 4])
        drifts = np.array([abs(ad.eval_constraint(phi + tau * d) - e_base)
                           for tau in taus])
        slopes = np.diff(np.log(drifts)) / np.diff(np.log(taus))
        assert np.all(np.abs(slopes - 2.0) < 0.3)

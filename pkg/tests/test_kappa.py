"""The finite-difference gradient verification harness."""

import numpy as np
import pytest

from adjopt.descent import ProblemAdapter
from adjopt.kappa import KappaReport, KappaSpec, kappa_sweep, plateau_fit, write_kappa_csv


def dot(a, b):
    return float(np.dot(a, b))


def quadratic_adapter():
    """F(phi) = 0.5 <phi, phi> with exact gradient phi."""
    return ProblemAdapter(
        eval_objective=lambda p: 0.5 * dot(p, p),
        eval_constraint=lambda p: 0.5 * dot(p, p),
        gradient_l2=lambda p: p.copy(),
        normal_l2=lambda p: p.copy(),
        smooth=lambda g: g,
        inner_l2=dot,
        inner_h=dot,
    )


class TestKappaSweep:
    def test_quadratic_closed_form(self):
        # kappa(eps) = 1 + eps <d,d> / (2 <phi,d>) exactly
        rng = np.random.default_rng(0)
        phi = rng.normal(size=40)
        d = rng.normal(size=40)
        eps = np.logspace(0, -6, 7)
        rep = kappa_sweep(KappaSpec(quadratic_adapter(), phi, d, eps, "objective"))
        expected = 1.0 + eps * dot(d, d) / (2.0 * dot(phi, d))
        np.testing.assert_allclose(rep.kappas, expected, rtol=1e-6)

    def test_truncation_branch_linear_in_eps(self):
        rng = np.random.default_rng(1)
        phi = rng.normal(size=40)
        d = rng.normal(size=40)
        eps = np.logspace(0, -4, 5)
        rep = kappa_sweep(KappaSpec(quadratic_adapter(), phi, d, eps, "objective"))
        slope = np.polyfit(np.log10(eps), np.log10(rep.errors), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.05)

    def test_degenerate_direction_rejected(self):
        phi = np.ones(10)
        d = np.zeros(10)
        with pytest.raises(ValueError, match="degenerate"):
            kappa_sweep(KappaSpec(quadratic_adapter(), phi, d, np.logspace(0, -4, 5)))

    def test_epsilons_must_descend(self):
        with pytest.raises(ValueError):
            KappaSpec(quadratic_adapter(), np.ones(4), np.ones(4),
                      np.array([1e-4, 1e-2]))

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        phi = rng.normal(size=16)
        d = rng.normal(size=16)
        spec = lambda: KappaSpec(quadratic_adapter(), phi, d, np.logspace(0, -8, 9))
        r1 = kappa_sweep(spec())
        r2 = kappa_sweep(spec())
        assert np.array_equal(r1.kappas, r2.kappas)


def synthetic_report(level=1e-6, eps=None):
    eps = np.logspace(0, -14, 29) if eps is None else eps
    err = level + eps + 1e-13 / eps
    return KappaReport(eps, 1.0 + err, err, "objective", 1.0)


class TestPlateauFit:
    def test_synthetic_curve(self):
        fit = plateau_fit(synthetic_report())
        assert 3e-7 < fit.level < 3e-6  # flanks overlap the floor slightly
        assert fit.width_decades > 1.5
        assert fit.right_slope == pytest.approx(1.0, abs=0.3)
        assert fit.left_slope == pytest.approx(-1.0, abs=0.3)

    def test_monotone_curve_reports_zero_width(self):
        eps = np.logspace(0, -10, 11)
        err = eps.copy()  # pure truncation, no plateau
        fit = plateau_fit(KappaReport(eps, 1 + err, err, "objective", 1.0))
        assert fit.width_decades == 0.0

    def test_notch_robustness(self):
        # an isolated near-zero dip must not fool the detector
        eps = np.logspace(0, -14, 29)
        err = 1e-6 + eps + 1e-13 / eps
        err[17] = 1e-12  # sign-cancellation notch
        fit = plateau_fit(KappaReport(eps, 1 + err, err, "objective", 1.0))
        assert 3e-7 < fit.level < 5e-6
        assert fit.width_decades > 1.5


class TestCsv:
    def test_round_trip(self, tmp_path):
        rep = synthetic_report()
        path = tmp_path / "kappa_test.csv"
        write_kappa_csv(path, rep)
        lines = path.read_text().splitlines()
        assert lines[0] == "epsilon,kappa,abs_one_minus_kappa"
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        np.testing.assert_allclose(data[:, 0], rep.epsilons, rtol=1e-16)
        np.testing.assert_allclose(data[:, 2], rep.errors, rtol=1e-16)

"""Privacy witnesses, toy federations, bound constants and expected-gap checks."""

import math

import numpy as np
import pandas as pd
import pytest

from analysis import (
    BoundConstants,
    IterateAverager,
    QuadraticToyProblem,
    SubproblemParams,
    box_diameter,
    estimate_bound_constants,
    expectation_gap_check,
    make_toy_federation,
    noise_recovery,
    penalized_subproblem_solve,
    theorem_rhs,
    theorem_rhs_presum,
    write_bound_report,
)
from errors import SolverError, UsageError
from optimizer import BoxConstraint, EtaRegime, Schedules, TrainingSettings, run_training

LADDER = (1.0, 10.0, 100.0, 1000.0)


def exterior_params(gen, shape, bound: float) -> SubproblemParams:
    """Subproblem whose unconstrained minimizer lies outside the box in every entry."""
    rho = gen.uniform(0.25, 0.5)
    eta = 1.0 / gen.uniform(0.5, 1.0)
    a = 1.0 / eta + rho
    excess = gen.uniform(1.5, 3.5, size=shape)
    sign = gen.choice((-1.0, 1.0), size=shape)
    target = sign * (bound + excess / a)
    zero = np.zeros(shape)
    return SubproblemParams(z_prev=zero, grad=zero, w=zero, lam=a * target, xi=zero, rho=rho, eta=eta)


class TestNoiseRecovery:
    """The noise <-> solution correspondence of the perturbed subproblem."""

    def test_round_trip_interior(self, gen):
        box = BoxConstraint(1e6)
        worst = 0.0
        for _ in range(1000):
            shape = (int(gen.integers(1, 4)), int(gen.integers(1, 4)))
            z_prev, grad, w, lam = (gen.normal(size=shape) for _ in range(4))
            xi = gen.laplace(0.0, 1.0, size=shape)
            rho, eta = gen.uniform(0.1, 10.0), gen.uniform(0.1, 10.0)
            params = SubproblemParams(z_prev, grad, w, lam, xi, rho, eta)

            z = params.closed_form(box)
            recovered = noise_recovery(z, z_prev, grad, w, lam, rho, eta, box)
            worst = max(worst, float(np.max(np.abs(recovered - xi))))

        print(f"🔁 worst round-trip error {worst:.2e}")
        assert worst <= 1e-8

    def test_clamped_entries_are_nan(self):
        box = BoxConstraint(1.0)
        zero = np.zeros((1, 2))
        z = np.array([[1.0, 0.3]])

        xi = noise_recovery(z, zero, zero, zero, zero, 1.0, 1.0, box)

        assert math.isnan(xi[0, 0])
        assert xi[0, 1] == pytest.approx(-0.6)

    def test_invalid_parameters(self):
        one = np.ones((1, 1))
        with pytest.raises(UsageError):
            noise_recovery(one, one, one, one, one, 0.0, 1.0)
        with pytest.raises(UsageError):
            SubproblemParams(one, one, one, one, one, rho=1.0, eta=0.0)


class TestPenalizedSubproblem:
    """Smooth log-penalty relaxation of the box constraint."""

    def test_ladder_approaches_projection_monotonically(self, gen):
        box = BoxConstraint(1.0)
        for _ in range(100):
            shape = (int(gen.integers(1, 3)), int(gen.integers(1, 3)))
            params = exterior_params(gen, shape, box.bound)
            projected = params.closed_form(box)

            distances = [float(np.max(np.abs(penalized_subproblem_solve(params, box, ell) - projected)))
                         for ell in LADDER]

            assert all(a > b for a, b in zip(distances, distances[1:])), distances
            assert distances[-1] <= 0.01

    def test_interior_solution_approaches_unconstrained(self, gen):
        box = BoxConstraint(10.0)
        zero = np.zeros((2, 2))
        params = SubproblemParams(zero, zero, zero, gen.uniform(-1.0, 1.0, size=(2, 2)), zero, rho=1.0, eta=1.0)

        z = penalized_subproblem_solve(params, box, ell=1000.0)

        np.testing.assert_allclose(z, params.closed_form(box), atol=1e-10)

    def test_stationarity_at_solution(self, gen):
        box = BoxConstraint(1.0)
        params = exterior_params(gen, (2, 3), box.bound)
        ell = 50.0

        z = penalized_subproblem_solve(params, box, ell, tol=1e-12)

        a, c = params.coefficients()
        slope = ell * (1 / (1 + np.exp(-ell * (z - 1.0))) - 1 / (1 + np.exp(-ell * (-z - 1.0))))
        assert np.max(np.abs(a * z - c + slope)) <= 1e-9

    def test_iteration_cap_raises(self, gen):
        params = exterior_params(gen, (2, 2), 1.0)

        with pytest.raises(SolverError) as info:
            penalized_subproblem_solve(params, BoxConstraint(1.0), ell=1000.0, tol=0.0, max_iter=1)
        assert info.value.residual > 0

    def test_invalid_arguments(self, gen):
        params = exterior_params(gen, (1, 1), 1.0)
        with pytest.raises(UsageError):
            penalized_subproblem_solve(params, BoxConstraint(1.0), ell=0.0)
        with pytest.raises(UsageError):
            penalized_subproblem_solve(params, BoxConstraint(math.inf), ell=1.0)


class TestToyProblems:
    """Toy federations and their exact optima."""

    def test_optimum_is_stationary(self, toy_federation):
        fed = toy_federation
        if fed.regime is EtaRegime.NONSMOOTH:
            pytest.skip("l1 term has no gradient at the shrunk coordinates")
        total = sum(problem.gradient(fed.optimum) for problem in fed.problems)

        np.testing.assert_allclose(total, 0.0, atol=1e-12)

    def test_optimum_beats_perturbations(self, toy_federation, gen):
        fed = toy_federation
        best = fed.optimal_value()
        for _ in range(50):
            z = fed.box.project(fed.optimum + gen.normal(0.0, 0.05, size=fed.shape))
            assert fed.global_objective([z] * fed.num_agents) >= best - 1e-12

    def test_moduli(self):
        fed = make_toy_federation(EtaRegime.STRONG, num_agents=2, points_per_agent=10, beta=0.5)

        assert fed.L == pytest.approx(0.5 + 2 * 0.5 / 2)
        assert fed.alpha == fed.L

    def test_sensitivity_is_largest_contribution(self, gen):
        points = gen.normal(size=(5, 1, 2))
        problem = QuadraticToyProblem(points, total_points=10, num_agents=2)
        z = gen.normal(size=(1, 2))

        expected = max(np.abs(z - a).sum() for a in points) / 10
        assert problem.sensitivity(z) == pytest.approx(expected)

    def test_gradient_matches_finite_difference(self, gen):
        problem = QuadraticToyProblem(gen.normal(size=(4, 2, 2)), total_points=8, num_agents=2, beta=0.3)
        z = gen.normal(size=(2, 2))
        h = 1e-6
        numeric = np.zeros_like(z)
        for idx in np.ndindex(*z.shape):
            step = np.zeros_like(z)
            step[idx] = h
            numeric[idx] = (problem.objective(z + step) - problem.objective(z - step)) / (2 * h)

        np.testing.assert_allclose(problem.gradient(z), numeric, rtol=1e-6, atol=1e-9)


class TestBoundConstants:
    """Sampled constants and the closed-form bounds."""

    def test_box_diameter(self):
        assert box_diameter(BoxConstraint(1.0), 1, 2) == pytest.approx(2.0 * math.sqrt(2.0))
        with pytest.raises(UsageError):
            box_diameter(BoxConstraint(math.inf), 1, 1)

    def test_estimates_are_consistent(self, toy_federation):
        c = estimate_bound_constants(toy_federation.problems, toy_federation.box, trials=50, seed=3)

        assert (c.J, c.K) == toy_federation.shape
        assert c.U2 == pytest.approx(box_diameter(toy_federation.box, c.J, c.K))
        assert 0 < c.U1 <= c.U1_upper
        assert 0 < c.U3 <= c.U3_upper
        assert c.estimated

    def test_logistic_problems_supported(self, logistic_problems):
        c = estimate_bound_constants(logistic_problems, BoxConstraint(2.0), trials=5)

        assert c.U3 <= c.U3_upper
        assert c.H >= c.U1

    def test_negative_constant_rejected(self):
        with pytest.raises(UsageError):
            BoundConstants(U1=-1.0, U2=1.0, U3=1.0, H=1.0, J=1, K=1)

    def _constants(self):
        return BoundConstants(U1=1.0, U2=2.0, U3=0.5, H=1.0, J=1, K=2, gamma=1.0, L=0.5, alpha=0.5,
                              rho_max=2.0, rho1=2.0)

    def test_rhs_hand_computed(self):
        c = self._constants()

        assert theorem_rhs("smooth", c, T=100, E=2, eps_bar=1.0, P=2, use_upper=False) == pytest.approx(0.3475)
        assert theorem_rhs("nonsmooth", c, T=100, E=2, eps_bar=1.0, P=2, use_upper=False) == pytest.approx(0.5625)
        assert theorem_rhs("strong", c, T=100, E=2, eps_bar=1.0, P=2, use_upper=False) == pytest.approx(30.5 / 101)

    def test_rhs_decreases_with_T(self):
        c = self._constants()
        for regime in EtaRegime:
            values = [theorem_rhs(regime, c, T=T, E=1, eps_bar=1.0, P=2) for T in (10, 100, 1000)]
            assert values[0] > values[1] > values[2]

    @pytest.mark.parametrize("eps_bar", [0.5, 1.0, math.inf])
    def test_presum_form_is_tighter(self, eps_bar):
        c = self._constants()
        for T in (1, 10, 500):
            presum = theorem_rhs_presum(c, T=T, E=3, eps_bar=eps_bar, P=2)
            assert presum <= theorem_rhs("smooth", c, T=T, E=3, eps_bar=eps_bar, P=2) * (1 + 1e-12)

    def test_rhs_validation(self):
        c = self._constants()
        with pytest.raises(UsageError):
            theorem_rhs("smooth", c, T=0, E=1, eps_bar=1.0, P=1)
        with pytest.raises(UsageError):
            theorem_rhs("strong", BoundConstants(U1=1, U2=1, U3=1, H=1, J=1, K=1), T=1, E=1, eps_bar=1.0, P=1)


class TestAveraging:
    """Averaged iterates collected from training rounds."""

    def _run(self, regime, T=5, E=3):
        fed = make_toy_federation(regime, seed=4)
        schedules = Schedules(eta_regime=regime, L=fed.L, alpha=fed.alpha, eps_bar=1.0, E=E, T=T)
        averager = IterateAverager(regime, T, E, fed.num_agents, fed.shape)
        rounds = []
        run_training(fed.problems, TrainingSettings(schedules=schedules, box=fed.box, mechanism="ObjP"),
                     observers=[averager, lambda r, s: rounds.append(r)])
        return averager, rounds

    def test_strong_weights_sum_to_one(self):
        averager, _ = self._run(EtaRegime.STRONG)
        result = averager.result()

        assert result.round_weights.sum() == pytest.approx(1.0)
        assert np.all(np.diff(result.round_weights) > 0)

    def test_nonsmooth_average_uses_leading_inner_iterates(self):
        averager, rounds = self._run(EtaRegime.NONSMOOTH, T=4, E=2)
        result = averager.result()

        expected = np.mean([z for r in rounds for z in r.results[0].inner[:-1]], axis=0)
        np.testing.assert_allclose(result.z_avg[0], expected, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(result.w_avg, np.mean([r.w for r in rounds], axis=0), rtol=1e-12, atol=1e-14)

    def test_smooth_average_uses_trailing_inner_iterates(self):
        averager, rounds = self._run(EtaRegime.SMOOTH, T=3, E=2)

        expected = np.mean([z for r in rounds for z in r.results[1].inner[1:]], axis=0)
        np.testing.assert_allclose(averager.result().z_avg[1], expected, rtol=1e-12, atol=1e-14)

    def test_incomplete_run_rejected(self):
        averager = IterateAverager(EtaRegime.SMOOTH, T=3, E=1, num_agents=1, shape=(1, 1))
        with pytest.raises(UsageError):
            averager.result()


class TestGapCheck:
    """Monte-Carlo expected-gap checks against the closed-form bounds."""

    @pytest.mark.parametrize("eps_bar", [1.0, math.inf])
    def test_short_check_passes(self, toy_federation, eps_bar):
        result = expectation_gap_check(toy_federation, runs=3, T=100, eps_bar=eps_bar, seed=5,
                                       calibration_runs=2, trials=20)

        print(f"📏 {result.regime.value} eps={eps_bar}: lhs={result.lhs:.4g} rhs={result.rhs:.4g}")
        assert result.passed
        assert result.gamma > 0
        assert len(result.lhs_runs) == 3
        if result.regime is EtaRegime.SMOOTH:
            assert result.rhs_presum <= result.rhs * (1 + 1e-12)
        else:
            assert math.isnan(result.rhs_presum)
        if math.isinf(eps_bar):
            assert result.lambda_within_gamma

    def test_report_columns(self, tmp_path):
        fed = make_toy_federation(EtaRegime.SMOOTH, seed=1)
        result = expectation_gap_check(fed, runs=1, T=20, calibration_runs=1, trials=5)

        path = write_bound_report([result], tmp_path / "report" / "bounds.csv")

        frame = pd.read_csv(path)
        assert list(frame.columns) == ["regime", "T", "E", "eps_bar", "lhs", "rhs", "pass", "rhs_presum"]
        assert frame.loc[0, "regime"] == "smooth"
        assert bool(frame.loc[0, "pass"]) == result.passed

    def test_invalid_runs(self):
        fed = make_toy_federation(EtaRegime.SMOOTH)
        with pytest.raises(UsageError):
            expectation_gap_check(fed, runs=0, T=10)

    @pytest.mark.slow
    @pytest.mark.parametrize("eps_bar", [1.0, math.inf])
    def test_full_check(self, toy_federation, eps_bar):
        result = expectation_gap_check(toy_federation, runs=50, T=1000, eps_bar=eps_bar, seed=0)

        assert result.passed, f"lhs {result.lhs} > rhs {result.rhs}"

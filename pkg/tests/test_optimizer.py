"""Federated inexact ADMM: schedules, closed-form step, local rounds and training runs."""

import math

import numpy as np
import pytest
from scipy.optimize import minimize

from analysis import make_toy_federation
from errors import DivergenceError, UsageError
from mechanisms import LaplaceSpec, RngStream, TAG_LAPLACE, sample_laplace_matrix
from model import AgentShard, LogisticShardProblem, ModelConfig
from optimizer import (
    AgentState,
    BoxConstraint,
    EtaRegime,
    FederatedTrainer,
    FederationState,
    Mechanism,
    RhoSchedule,
    Schedules,
    TrainingSettings,
    dual_update,
    eta_schedule,
    local_round,
    local_subproblem_step,
    rho_schedule,
    run_training,
    server_global_update,
)


def subproblem_objective(z, z_prev, grad, w, lam, xi, rho, eta):
    """<grad + xi, z> - <lam, z> + rho/2 ||w - z||^2 + ||z - z_prev||^2 / (2 eta) and its gradient."""
    value = np.sum((grad + xi - lam) * z) + 0.5 * rho * np.sum((w - z) ** 2) + np.sum((z - z_prev) ** 2) / (2 * eta)
    derivative = grad + xi - lam - rho * (w - z) + (z - z_prev) / eta
    return value, derivative


class NaNProblem:
    shape = (1, 2)

    def objective(self, z):
        return math.nan

    def gradient(self, z):
        return np.full(self.shape, np.nan)

    def sensitivity(self, z):
        return 0.0

    def gradient_and_sensitivity(self, z):
        return self.gradient(z), 0.0


class TestSchedules:
    """rho and eta schedules."""

    def test_rho_reference_value(self):
        assert rho_schedule(1, 1.0, c1=2, c2=5, Tc=10000) == pytest.approx(7.0)
        assert rho_schedule(9999, 1.0, c1=2, c2=5, Tc=10000) == pytest.approx(7.0)
        assert rho_schedule(10000, 1.0, c1=2, c2=5, Tc=10000) == pytest.approx(2 * 1.2 + 5)

    def test_rho_nonprivate_and_cap(self):
        assert rho_schedule(1, math.inf, c1=2, c2=5, Tc=10) == 2.0
        assert rho_schedule(10 ** 7, 1.0, c1=2, c2=5, Tc=1) == 1e9
        with pytest.raises(UsageError):
            rho_schedule(0, 1.0, c1=2, c2=5, Tc=10)

    def test_rho_nondecreasing(self):
        values = [rho_schedule(t, 0.5, c1=0.005, c2=0.05, Tc=3) for t in range(1, 60)]

        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_rho_schedule_variants(self):
        assert RhoSchedule(static=0.1).at(500, 1.0) == 0.1
        assert RhoSchedule(scale=0.01).at(1, 1.0) == pytest.approx(0.07)
        with pytest.raises(UsageError):
            RhoSchedule(static=0.0)
        with pytest.raises(UsageError):
            RhoSchedule(scale=-1.0)

    def test_eta_regimes(self):
        assert eta_schedule(4, EtaRegime.NONSMOOTH) == 0.5
        assert eta_schedule(2, EtaRegime.STRONG, alpha=0.5) == pytest.approx(1.0)
        assert eta_schedule(4, EtaRegime.SMOOTH, L=1.0, eps_bar=2.0) == pytest.approx(0.5)
        assert eta_schedule(4, EtaRegime.SMOOTH, L=2.0, eps_bar=math.inf) == 0.5
        assert math.isinf(eta_schedule(1, EtaRegime.SMOOTH, L=0.0, eps_bar=math.inf))

    def test_eta_invalid(self):
        with pytest.raises(UsageError):
            eta_schedule(0, EtaRegime.NONSMOOTH)
        with pytest.raises(UsageError):
            eta_schedule(1, EtaRegime.STRONG, alpha=0.0)

    def test_schedules_bundle(self):
        s = Schedules(eta_regime="strong", alpha=2.0, eps_bar=1.0, E=3, T=10)

        assert s.eta_regime is EtaRegime.STRONG
        assert s.private
        assert s.rho_at(1) == pytest.approx(7.0)
        assert s.eta_at(1) == pytest.approx(1.0 / 3.0)
        assert not Schedules().private
        with pytest.raises(UsageError):
            Schedules(E=0)
        with pytest.raises(UsageError):
            Schedules(eps_bar=0.0)


class TestServerAndDual:
    """Global averaging and the dual update."""

    def test_global_update_example(self):
        z = [np.array([[1.0]]), np.array([[3.0]])]
        lam = [np.array([[2.0]]), np.array([[-2.0]])]

        w = server_global_update(z, lam, rho=2.0)

        np.testing.assert_array_equal(w, [[2.0]])

    def test_global_update_matches_direct_mean(self, gen):
        for _ in range(200):
            P = int(gen.integers(1, 12))
            shape = (int(gen.integers(1, 6)), int(gen.integers(1, 6)))
            z = [gen.normal(0.0, 5.0, size=shape) for _ in range(P)]
            lam = [gen.normal(0.0, 5.0, size=shape) for _ in range(P)]
            rho = float(gen.uniform(0.01, 100.0))

            w = server_global_update(z, lam, rho)

            assert w.shape == shape
            np.testing.assert_allclose(w, np.mean(np.stack(z) - np.stack(lam) / rho, axis=0),
                                       rtol=1e-12, atol=1e-12)

    def test_global_update_validation(self):
        with pytest.raises(UsageError):
            server_global_update([np.zeros((1, 1))], [np.zeros((1, 1))], rho=0.0)
        with pytest.raises(UsageError):
            server_global_update([np.zeros((1, 1))], [], rho=1.0)

    def test_dual_update(self):
        lam = dual_update(np.array([[1.0]]), 3.0, np.array([[2.0]]), np.array([[1.5]]))

        np.testing.assert_array_equal(lam, [[2.5]])


class TestLocalSubproblem:
    """Closed-form minimizer of the perturbed, linearized local subproblem."""

    def test_matches_iterative_minimizer(self, gen):
        worst = 0.0
        worst_residual = 0.0
        for _ in range(1000):
            shape = (int(gen.integers(1, 3)), int(gen.integers(1, 4)))
            z_prev, grad, w, lam, xi = (gen.normal(0.0, 1.0, size=shape) for _ in range(5))
            rho, eta = gen.uniform(0.1, 10.0), gen.uniform(0.1, 10.0)
            box = BoxConstraint(float(gen.uniform(0.5, 2.0)))

            closed = local_subproblem_step(z_prev, grad, w, lam, xi, rho, eta, box)
            res = minimize(
                lambda v: subproblem_objective(v.reshape(shape), z_prev, grad, w, lam, xi, rho, eta)[0],
                np.zeros(closed.size),
                jac=lambda v: subproblem_objective(v.reshape(shape), z_prev, grad, w, lam, xi, rho, eta)[1].ravel(),
                method="L-BFGS-B", bounds=[(-box.bound, box.bound)] * closed.size,
                options={"gtol": 1e-14, "ftol": 1e-30, "maxiter": 1000})
            worst = max(worst, float(np.max(np.abs(res.x.reshape(shape) - closed))))

            # First-order conditions with the normal cone at active bounds.
            _, d = subproblem_objective(closed, z_prev, grad, w, lam, xi, rho, eta)
            interior = np.abs(closed) < box.bound
            residual = np.where(interior, np.abs(d),
                                np.where(closed >= box.bound, np.maximum(d, 0.0), np.maximum(-d, 0.0)))
            worst_residual = max(worst_residual, float(residual.max()))

        print(f"🎯 max deviation {worst:.2e}, max first-order residual {worst_residual:.2e}")
        assert worst <= 1e-8
        assert worst_residual <= 1e-10

    def test_unbounded_box_is_unclamped(self):
        one = np.ones((1, 1))
        z = local_subproblem_step(0 * one, -1000 * one, 0 * one, 0 * one, 0 * one, 1.0, 1.0, BoxConstraint(math.inf))

        np.testing.assert_array_equal(z, [[500.0]])

    def test_clamped_to_box(self):
        one = np.ones((1, 2))
        z = local_subproblem_step(0 * one, np.array([[-1000.0, 1000.0]]), 0 * one, 0 * one, 0 * one,
                                  1.0, 1.0, BoxConstraint(100.0))

        np.testing.assert_array_equal(z, [[100.0, -100.0]])

    def test_infinite_eta_drops_proximal_term(self, gen):
        z_prev, grad, w, lam, xi = (gen.normal(size=(2, 2)) for _ in range(5))

        z = local_subproblem_step(z_prev, grad, w, lam, xi, 2.0, math.inf, BoxConstraint(math.inf))

        np.testing.assert_allclose(z, (2.0 * w + lam - xi - grad) / 2.0, rtol=1e-14)

    def test_invalid_parameters(self):
        one = np.ones((1, 1))
        with pytest.raises(UsageError):
            local_subproblem_step(one, one, one, one, one, 0.0, 1.0, BoxConstraint())
        with pytest.raises(UsageError):
            local_subproblem_step(one, one, one, one, one, 1.0, -1.0, BoxConstraint())
        with pytest.raises(UsageError):
            BoxConstraint(0.0)


class TestLocalRound:
    """E perturbed inner steps, averaging and the agent-side dual update."""

    def _agent(self, shape, p=0):
        return AgentState(p, np.zeros(shape), np.zeros(shape), np.zeros(shape))

    def test_transmits_average_of_inner_iterates(self, logistic_problems):
        problem = logistic_problems[1]
        s = Schedules(eps_bar=1.0, E=4, T=1)
        agent = self._agent(problem.shape, p=1)
        w = np.full(problem.shape, 0.1)

        result = local_round(agent, problem, w, 1, s, Mechanism.OBJP, RngStream(3), BoxConstraint())

        assert len(result.inner) == 5
        assert len(result.noise.draws) == 4
        np.testing.assert_allclose(result.z, np.mean(result.inner[1:], axis=0), rtol=1e-14, atol=1e-15)
        np.testing.assert_array_equal(result.lam, dual_update(agent.lam, s.rho_at(1), w, result.z))

    def test_single_update_is_one_clamped_closed_form_step(self, logistic_problems, gen):
        problem = logistic_problems[2]
        s = Schedules(eps_bar=0.5, E=1, T=1)
        agent = AgentState(0, np.zeros(problem.shape), gen.normal(size=problem.shape),
                           gen.normal(0.0, 0.3, size=problem.shape))
        w = gen.normal(size=problem.shape)
        box = BoxConstraint(0.25)

        result = local_round(agent, problem, w, 1, s, Mechanism.OBJP, RngStream(11), box)

        rho, eta = s.rho_at(1), s.eta_at(1)
        xi = result.noise.draws[0]
        grad = problem.gradient(agent.z_inner)
        expected = np.clip((agent.z_inner / eta + rho * w + agent.lam - xi - grad) / (1.0 / eta + rho),
                           -0.25, 0.25)
        np.testing.assert_allclose(result.z, expected, rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(result.lam, agent.lam + rho * (w - expected), rtol=1e-13, atol=1e-13)
        assert len(result.inner) == 2

    def test_noise_uses_sensitivity_at_current_iterate(self, logistic_problems):
        problem = logistic_problems[0]
        s = Schedules(eps_bar=0.5, E=2, T=1)
        agent = self._agent(problem.shape)
        rng = RngStream(9)

        result = local_round(agent, problem, np.zeros(problem.shape), 1, s, Mechanism.OBJP, rng, BoxConstraint())

        assert result.noise.scales[0] == pytest.approx(problem.sensitivity(np.zeros(problem.shape)) / 0.5)
        assert result.noise.scales[1] == pytest.approx(problem.sensitivity(result.inner[1]) / 0.5)
        expected = sample_laplace_matrix(LaplaceSpec(result.noise.scales[0], problem.shape),
                                         rng.child(TAG_LAPLACE, 0, 1, 1))
        np.testing.assert_array_equal(result.noise.draws[0], expected)

    def test_nonprivate_records_no_noise(self, logistic_problems):
        problem = logistic_problems[0]
        s = Schedules(E=3, T=1)

        result = local_round(self._agent(problem.shape), problem, np.zeros(problem.shape), 1, s,
                             Mechanism.NONPRIVATE, RngStream(0), BoxConstraint())

        assert result.noise.draws == []
        assert result.noise.mean_abs() == 0.0

    def test_infinite_budget_matches_nonprivate(self, logistic_problems):
        problem = logistic_problems[2]
        s = Schedules(eps_bar=math.inf, E=3, T=1)
        w = np.full(problem.shape, -0.2)
        args = (problem, w, 1, s)

        objp = local_round(self._agent(problem.shape), *args, Mechanism.OBJP, RngStream(1), BoxConstraint())
        plain = local_round(self._agent(problem.shape), *args, Mechanism.NONPRIVATE, RngStream(1), BoxConstraint())

        np.testing.assert_array_equal(objp.z, plain.z)
        np.testing.assert_array_equal(objp.lam, plain.lam)

    def test_output_perturbation_needs_single_update(self, logistic_problems):
        problem = logistic_problems[0]
        with pytest.raises(UsageError):
            local_round(self._agent(problem.shape), problem, np.zeros(problem.shape), 1,
                        Schedules(eps_bar=1.0, E=2), Mechanism.OUTP, RngStream(0), BoxConstraint())

    def test_nan_raises_divergence_with_location(self):
        problem = NaNProblem()
        with pytest.raises(DivergenceError) as info:
            local_round(self._agent(problem.shape, p=3), problem, np.zeros(problem.shape), 7,
                        Schedules(E=2), Mechanism.NONPRIVATE, RngStream(0), BoxConstraint())

        assert (info.value.t, info.value.e, info.value.p) == (7, 1, 3)


class TestTraining:
    """Full runs of the federated trainer."""

    def test_zero_rounds_returns_initial_state(self, logistic_problems):
        result = run_training(logistic_problems, TrainingSettings(schedules=Schedules(T=0)))

        assert result.rounds == 0
        np.testing.assert_array_equal(result.state.w, np.zeros(logistic_problems[0].shape))
        assert result.state.t == 1

    def test_initial_state(self):
        state = FederationState.initial((2, 3), 4, Mechanism.OBJP)

        assert state.num_agents == 4
        assert state.consensus_residual() == 0.0
        assert all(np.all(z == 0) for z in state.z)

    def test_observers_and_snapshots(self, logistic_problems):
        seen = []
        settings = TrainingSettings(schedules=Schedules(eps_bar=1.0, E=2, T=6), mechanism=Mechanism.OBJP,
                                    snapshot_every=2)

        result = run_training(logistic_problems, settings, observers=[lambda r, s: seen.append(r.t)])

        assert seen == [1, 2, 3, 4, 5, 6]
        assert [s.t for s in result.snapshots] == [1, 3, 5, 7]
        assert len(result.rho_history) == 6
        for server_lam, agent in zip(result.state.server_lam, result.state.agents):
            np.testing.assert_array_equal(server_lam, agent.lam)

    def test_deterministic_across_thread_counts(self, logistic_problems):
        runs = []
        for threads in (1, 4):
            settings = TrainingSettings(schedules=Schedules(eps_bar=1.0, E=3, T=5), mechanism=Mechanism.OBJP,
                                        seed=42, threads=threads)
            runs.append(run_training(logistic_problems, settings).state)

        np.testing.assert_array_equal(runs[0].w, runs[1].w)
        for a, b in zip(runs[0].agents, runs[1].agents):
            np.testing.assert_array_equal(a.z, b.z)
            np.testing.assert_array_equal(a.lam, b.lam)

    def test_seed_changes_noise(self, logistic_problems):
        states = []
        for seed in (0, 1):
            settings = TrainingSettings(schedules=Schedules(eps_bar=1.0, T=3), mechanism=Mechanism.OBJP, seed=seed)
            states.append(run_training(logistic_problems, settings).state)

        assert not np.array_equal(states[0].w, states[1].w)

    def test_output_perturbation_calibration(self, logistic_problems):
        settings = TrainingSettings(schedules=Schedules(eps_bar=0.5, T=2), mechanism=Mechanism.OUTP,
                                    delta_bar=1e-5, outp_l2_scale=2.0)
        trainer = FederatedTrainer(logistic_problems, settings)

        for agent, problem in zip(trainer.state.agents, logistic_problems):
            expected = math.sqrt(2 * math.log(1.25 / 1e-5)) * 2.0 * problem.sensitivity(np.zeros(problem.shape)) / 0.5
            assert agent.gaussian.sigma0 == pytest.approx(expected)
        record = trainer.step()
        assert all(len(r.noise.draws) == 1 for r in record.results)

    def test_zero_output_noise_matches_nonprivate(self, logistic_problems):
        def trajectory(mechanism, **extra):
            rounds = []

            def record(r, state):
                rounds.append((r.w.copy(), [a.z.copy() for a in state.agents], [a.lam.copy() for a in state.agents]))

            settings = TrainingSettings(schedules=Schedules(eps_bar=1.0, T=8), mechanism=mechanism, seed=5, **extra)
            run_training(logistic_problems, settings, observers=[record])
            return rounds

        outp = trajectory(Mechanism.OUTP, outp_sigma0=0.0)
        plain = trajectory(Mechanism.NONPRIVATE)

        assert len(outp) == len(plain) == 8
        for (w_a, z_a, lam_a), (w_b, z_b, lam_b) in zip(outp, plain):
            np.testing.assert_array_equal(w_a, w_b)
            for p in range(len(z_a)):
                np.testing.assert_array_equal(z_a[p], z_b[p])
                np.testing.assert_array_equal(lam_a[p], lam_b[p])

    def test_settings_validation(self, logistic_problems):
        with pytest.raises(UsageError):
            TrainingSettings(schedules=Schedules(E=2), mechanism=Mechanism.OUTP)
        with pytest.raises(UsageError):
            TrainingSettings(schedules=Schedules(), threads=0)
        other = LogisticShardProblem(
            AgentShard(agent_id=9, features=np.ones((1, 7)), labels=np.eye(3)[:1]),
            ModelConfig(beta=0.0, total_samples=1, num_agents=1))
        with pytest.raises(UsageError):
            run_training(logistic_problems + [other], TrainingSettings(schedules=Schedules(T=1)))

    def test_smooth_toy_reaches_optimum(self):
        federation = make_toy_federation(EtaRegime.SMOOTH, seed=2, box_bound=math.inf)
        schedules = Schedules(rho=RhoSchedule(static=1.0), eta_regime=EtaRegime.SMOOTH, L=federation.L,
                              eps_bar=math.inf, T=2000)

        result = run_training(federation.problems, TrainingSettings(schedules=schedules, box=federation.box))

        gap = federation.global_objective([result.state.w] * federation.num_agents) - federation.optimal_value()
        print(f"📉 objective gap {gap:.2e}, residual {result.state.consensus_residual():.2e}")
        assert -1e-12 <= gap <= 1e-6
        assert result.state.consensus_residual() <= 1e-6

    def test_separable_logistic_is_learned(self):
        gen = np.random.default_rng(5)
        centers = np.array([[1.0, 0.1], [0.1, 1.0]])
        labels = np.repeat([0, 1], 20)
        features = centers[labels] + gen.uniform(-0.05, 0.05, size=(40, 2))
        order = gen.permutation(40)
        shards = [AgentShard(agent_id=p, features=features[idx], labels=np.eye(2)[labels[idx]])
                  for p, idx in enumerate(np.array_split(order, 2))]
        cfg = ModelConfig.for_shards(shards, beta=1e-6)
        problems = [LogisticShardProblem(s, cfg) for s in shards]

        result = run_training(problems, TrainingSettings(schedules=Schedules(T=300)))

        predictions = np.argmax(features @ result.state.w, axis=1)
        assert np.all(predictions == labels)

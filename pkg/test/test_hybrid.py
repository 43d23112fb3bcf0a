"""
Optimization loop, stopping rules, step-size selection and CPMG freezing.

Run with:
    python -m unittest test.test_hybrid
"""

from __future__ import annotations

import math
import unittest

import numpy as np
from numpy.testing import assert_array_equal

from core.errors import PulseError
from core.hybrid import (
    ObjectiveEvaluator,
    choose_step_size,
    cpmg_block_starts,
    freeze_cpmg,
    optimize,
    optimize_grape,
    optimize_sagrape,
    seed_streams,
)
from core.models import Algorithm, CpmgConfig, OptimizerConfig, StopReason
from core.objective import ControlTask, fidelity
from core.propagate import PulseSequence, RfiDistribution
from core.spinsys import SpinSystem
from core.tasks import lls, selective_pi, thermal_z

IDEAL = RfiDistribution()


def single_spin() -> tuple[SpinSystem, ControlTask]:
    return SpinSystem.from_hz([0.0], []), ControlTask.gate_synthesis(selective_pi(1), label="x-pi")


def xpi_start(seed: int = 7) -> PulseSequence:
    return PulseSequence.random(10, 1e-4, 2 * math.pi * 50.0, np.random.default_rng(seed))


class CpmgTest(unittest.TestCase):
    def test_single_block_is_centred(self) -> None:
        tau = 1e-4
        pulse = freeze_cpmg(PulseSequence.zeros(10, tau), 1, math.pi / (2 * tau))
        assert_array_equal(np.flatnonzero(pulse.frozen), [4, 5])
        self.assertEqual(pulse.amps_x[4], math.pi / (2 * tau))

    def test_long_sequence_layout(self) -> None:
        tau = 0.079 / 250
        pulse = freeze_cpmg(PulseSequence.zeros(250, tau), 6, 9941.0)
        assert_array_equal(np.flatnonzero(pulse.frozen), [20, 62, 104, 145, 187, 229])
        assert_array_equal(pulse.amps_x[pulse.frozen], 9941.0)
        assert_array_equal(pulse.amps_y[pulse.frozen], 0.0)

    def test_block_starts(self) -> None:
        self.assertEqual(cpmg_block_starts(12, 2, 2), [2, 8])

    def test_overlap_rejected(self) -> None:
        tau = 1e-4
        with self.assertRaises(PulseError):
            freeze_cpmg(PulseSequence.zeros(4, tau), 3, math.pi / (2 * tau))

    def test_pi_pulse_shorter_than_segment(self) -> None:
        with self.assertRaises(PulseError):
            freeze_cpmg(PulseSequence.zeros(10, 1e-3), 1, 1e5)


class SeedStreamTest(unittest.TestCase):
    def test_streams_are_independent_and_reproducible(self) -> None:
        a, b = seed_streams(5), seed_streams(5)
        self.assertEqual(a.pulse.random(), b.pulse.random())
        self.assertNotEqual(seed_streams(5).pulse.random(), seed_streams(5).anneal.random())


class EvaluatorTest(unittest.TestCase):
    def test_counts_calls(self) -> None:
        sys, task = single_spin()
        evaluator = ObjectiveEvaluator(sys, task, IDEAL)
        evaluator.fidelity(xpi_start())
        evaluator.fidelity_and_gradient(xpi_start())
        self.assertEqual(evaluator.evaluations, 2)
        self.assertGreater(evaluator.elapsed, 0.0)

    def test_noise_needs_generator(self) -> None:
        sys, task = single_spin()
        with self.assertRaises(ValueError):
            ObjectiveEvaluator(sys, task, IDEAL, zeta=5.0)

    def test_noisy_calls_draw_fresh_trajectories(self) -> None:
        sys = SpinSystem.from_hz([0.0, 127.4], [8.8])
        task = ControlTask.state_transfer(thermal_z(2), lls(2))
        pulse = PulseSequence.random(10, 5e-3, 300.0, np.random.default_rng(0))
        evaluator = ObjectiveEvaluator(sys, task, IDEAL, zeta=50.0, ensemble=2, rng=np.random.default_rng(1))
        self.assertNotEqual(evaluator.fidelity(pulse), evaluator.fidelity(pulse))


class StepSizeTest(unittest.TestCase):
    def test_picks_the_best_candidate(self) -> None:
        sys, task = single_spin()
        eps = choose_step_size(sys, task, IDEAL, xpi_start(), [0.0, 1e7])
        self.assertEqual(eps, 1e7)

    def test_ties_go_to_the_first(self) -> None:
        sys, task = single_spin()
        self.assertEqual(choose_step_size(sys, task, IDEAL, xpi_start(), [0.0, 0.0]), 0.0)

    def test_no_candidates(self) -> None:
        sys, task = single_spin()
        with self.assertRaises(ValueError):
            choose_step_size(sys, task, IDEAL, xpi_start(), [])


class OptimizeTest(unittest.TestCase):
    def test_grape_converges_to_x_pi(self) -> None:
        sys, task = single_spin()
        config = OptimizerConfig(algorithm=Algorithm.GRAPE, epsilon=1e7, max_iters=300, target_fidelity=0.999, seed=7)
        result = optimize_grape(sys, task, IDEAL, xpi_start(), config)
        self.assertEqual(result.stop_reason, StopReason.TARGET_REACHED)
        self.assertGreaterEqual(result.final_fidelity, 0.999)
        self.assertEqual(result.label, "GRAPE")
        self.assertEqual(result.trace[0].iteration, 0)
        self.assertEqual(len(result.trace), result.iterations + 1)

    def test_target_already_reached(self) -> None:
        sys = SpinSystem.from_hz([0.0], [])
        task = ControlTask.gate_synthesis(np.eye(2))
        config = OptimizerConfig(epsilon=1e7, target_fidelity=0.99)
        result = optimize(sys, task, IDEAL, PulseSequence.zeros(4, 1e-4), config)
        self.assertEqual(result.stop_reason, StopReason.TARGET_REACHED)
        self.assertEqual(result.evaluations, 1)
        self.assertEqual(result.iterations, 0)
        self.assertEqual(len(result.trace), 1)

    def test_zero_step_hits_iteration_cap(self) -> None:
        sys, task = single_spin()
        config = OptimizerConfig(epsilon=0.0, max_iters=3)
        result = optimize(sys, task, IDEAL, xpi_start(), config)
        self.assertEqual(result.stop_reason, StopReason.ITERATION_CAP)
        self.assertEqual(len(result.trace), 4)
        self.assertEqual(len({p.fidelity for p in result.trace}), 1)
        self.assertTrue(result.best_pulse.same_as(xpi_start()))

    def test_evaluation_cap(self) -> None:
        sys, task = single_spin()
        config = OptimizerConfig(algorithm=Algorithm.SAGRAPE, kappa=3, epsilon=0.0, max_evals=12, t0=1e-6)
        result = optimize(sys, task, IDEAL, xpi_start(), config)
        self.assertEqual(result.stop_reason, StopReason.EVALUATION_CAP)
        # one initial evaluation, then κ + 2 per outer iteration
        self.assertEqual(result.evaluations, 1 + 3 * (3 + 2))
        self.assertEqual([p.evaluations for p in result.trace], [1, 6, 11, 16])

    def test_interrupt(self) -> None:
        sys, task = single_spin()
        calls = []

        def stop() -> bool:
            calls.append(1)
            return len(calls) > 2

        result = optimize(sys, task, IDEAL, xpi_start(), OptimizerConfig(epsilon=0.0), stop_check=stop)
        self.assertEqual(result.stop_reason, StopReason.INTERRUPTED)
        self.assertEqual(result.iterations, 2)

    def test_time_budget(self) -> None:
        sys, task = single_spin()
        config = OptimizerConfig(epsilon=0.0, max_iters=10**6)
        result = optimize(sys, task, IDEAL, xpi_start(), config, budget_s=1e-9)
        self.assertEqual(result.stop_reason, StopReason.TIME_BUDGET)
        self.assertLessEqual(result.iterations, 1)

    def test_sagrape_without_annealing_matches_grape(self) -> None:
        sys, task = single_spin()
        grape = optimize(sys, task, IDEAL, xpi_start(), OptimizerConfig(epsilon=1e7, max_iters=5, seed=3))
        sagrape = optimize_sagrape(
            sys, task, IDEAL, xpi_start(),
            OptimizerConfig(algorithm=Algorithm.SAGRAPE, kappa=0, epsilon=1e7, max_iters=5, seed=3),
        )
        self.assertTrue(grape.best_pulse.same_as(sagrape.best_pulse))
        self.assertEqual([p.fidelity for p in grape.trace], [p.fidelity for p in sagrape.trace])
        self.assertEqual(sagrape.label, "SAGRAPE-0")

    def test_wrong_algorithm_wrapper(self) -> None:
        sys, task = single_spin()
        with self.assertRaises(ValueError):
            optimize_grape(sys, task, IDEAL, xpi_start(), OptimizerConfig(algorithm=Algorithm.SAGRAPE))

    def test_rsagrape_is_deterministic(self) -> None:
        sys = SpinSystem.from_hz([0.0, 127.4], [8.8])
        task = ControlTask.state_transfer(thermal_z(2), lls(2))
        pulse0 = PulseSequence.random(20, 5e-3, 300.0, np.random.default_rng(0))
        config = OptimizerConfig(
            algorithm=Algorithm.RSAGRAPE, kappa=2, zeta_hz=5.0, noise_ensemble=2, epsilon=1e4, max_iters=4, seed=99
        )
        a = optimize(sys, task, IDEAL, pulse0, config)
        b = optimize(sys, task, IDEAL, pulse0, config)
        self.assertTrue(a.best_pulse.same_as(b.best_pulse))
        self.assertEqual([p.fidelity for p in a.trace], [p.fidelity for p in b.trace])
        self.assertEqual(a.label, "RSAGRAPE-5")

    def test_frozen_blocks_survive(self) -> None:
        sys = SpinSystem.from_hz([0.0, 127.4], [8.8])
        task = ControlTask.state_transfer(thermal_z(2), lls(2))
        tau = 0.079 / 250
        pulse0 = PulseSequence.random(250, tau, 300.0, np.random.default_rng(1))
        config = OptimizerConfig(
            algorithm=Algorithm.SAGRAPE, kappa=2, epsilon=1e5, max_iters=3, cpmg=CpmgConfig(), seed=4
        )
        result = optimize(sys, task, IDEAL, pulse0, config)
        best = result.best_pulse
        self.assertEqual(int(best.frozen.sum()), 6)
        assert_array_equal(best.amps_x[best.frozen], 9941.0)
        assert_array_equal(best.amps_y[best.frozen], 0.0)

    def test_best_pulse_is_reported(self) -> None:
        sys, task = single_spin()
        result = optimize(sys, task, IDEAL, xpi_start(), OptimizerConfig(epsilon=1e7, max_iters=20, target_fidelity=1.0))
        self.assertAlmostEqual(result.final_fidelity, max(p.fidelity for p in result.trace), places=12)
        self.assertAlmostEqual(result.final_fidelity, fidelity(sys, result.best_pulse, task, IDEAL), places=12)
        summary = result.summary()
        self.assertEqual(summary["stop_reason"], result.stop_reason.value)
        self.assertEqual(summary["attainability_bound"], 1.0)

    def test_state_goal_is_relative_to_bound(self) -> None:
        sys = SpinSystem.from_hz([0.0, 127.4], [8.8])
        task = ControlTask.state_transfer(thermal_z(2), lls(2))
        result = optimize(
            sys, task, IDEAL, PulseSequence.zeros(5, 1e-3), OptimizerConfig(epsilon=0.0, max_iters=1, target_fidelity=0.5)
        )
        self.assertAlmostEqual(result.attainable, math.sqrt(2 / 3), places=12)
        self.assertEqual(result.stop_reason, StopReason.ITERATION_CAP)


if __name__ == "__main__":
    unittest.main()

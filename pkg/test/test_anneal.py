"""
Annealing threshold, schedule and sweeps.

Run with:
    python -m unittest test.test_anneal
"""

from __future__ import annotations

import math
import unittest

import numpy as np
from numpy.testing import assert_array_equal

from core.anneal import MIN_TEMPERATURE, AnnealState, accepts, propose_neighbor, sa_sweep, threshold
from core.errors import AnnealError
from core.propagate import PulseSequence


def state(t0: float = 1.0, gamma: float = 0.9, scale: float = 10.0, seed: int = 0) -> AnnealState:
    return AnnealState(t0=t0, gamma=gamma, step_scale=scale, rng=np.random.default_rng(seed))


class ThresholdTest(unittest.TestCase):
    def test_examples(self) -> None:
        self.assertAlmostEqual(threshold(-0.2, 0.5), -0.5 * math.exp(-0.4), places=15)
        self.assertAlmostEqual(threshold(-0.2, 0.5), -0.33516, places=5)
        self.assertAlmostEqual(threshold(-0.9, 0.1), -1.2341e-5, delta=1e-9)

    def test_saturates_at_minus_one(self) -> None:
        self.assertEqual(threshold(0.0, 1.0), -1.0)
        self.assertEqual(threshold(0.0, 2.0), -1.0)
        self.assertEqual(threshold(1e6, 1e-3), -1.0)

    def test_always_within_bounds(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(2000):
            delta = float(rng.uniform(-2.0, 2.0))
            temperature = float(10 ** rng.uniform(-12, 1))
            value = threshold(delta, temperature)
            self.assertGreaterEqual(value, -1.0)
            self.assertLessEqual(value, 0.0)

    def test_improvements_always_accepted(self) -> None:
        for temperature in (1e-12, 1e-3, 1.0, 5.0):
            self.assertTrue(accepts(0.0, temperature))
            self.assertTrue(accepts(1e-9, temperature))

    def test_cold_rejects_worsening(self) -> None:
        self.assertFalse(accepts(-1e-6, 1e-12))
        self.assertTrue(accepts(1e-6, 1e-12))

    def test_temperature_must_be_positive(self) -> None:
        with self.assertRaises(AnnealError):
            threshold(0.0, 0.0)


class AnnealStateTest(unittest.TestCase):
    def test_validation(self) -> None:
        with self.assertRaises(AnnealError):
            state(t0=0.0)
        with self.assertRaises(AnnealError):
            state(gamma=1.0)
        with self.assertRaises(AnnealError):
            state(scale=0.0)

    def test_cooling_is_geometric(self) -> None:
        s = state(t0=2.0, gamma=0.5)
        for _ in range(3):
            s = s.cooled()
        self.assertEqual(s.iteration, 3)
        self.assertEqual(s.temperature, 2.0 * 0.5**3)

    def test_temperature_never_reaches_zero(self) -> None:
        s = AnnealState(t0=1.0, gamma=0.5, step_scale=1.0, rng=np.random.default_rng(0), iteration=5000)
        self.assertEqual(s.temperature, MIN_TEMPERATURE)
        self.assertGreater(s.temperature, 0.0)


class NeighborTest(unittest.TestCase):
    def test_perturbation_statistics(self) -> None:
        pulse = PulseSequence.zeros(20000, 1e-4)
        out = propose_neighbor(pulse, 3.0, np.random.default_rng(1))
        kicks = np.concatenate([out.amps_x, out.amps_y])
        self.assertLessEqual(float(np.max(np.abs(kicks))), 3.0)
        self.assertAlmostEqual(float(np.mean(kicks)), 0.0, delta=0.05)
        self.assertAlmostEqual(float(np.var(kicks)), 3.0**2 / 3, delta=0.1)

    def test_frozen_untouched(self) -> None:
        pulse = PulseSequence.zeros(10, 1e-3).with_segments([0, 9], 9941.0, 0.0)
        out = propose_neighbor(pulse, 100.0, np.random.default_rng(2))
        assert_array_equal(out.amps_x[[0, 9]], [9941.0, 9941.0])
        assert_array_equal(out.amps_y[[0, 9]], [0.0, 0.0])
        self.assertFalse(np.array_equal(out.amps_x[1:9], pulse.amps_x[1:9]))

    def test_reproducible(self) -> None:
        pulse = PulseSequence.zeros(5, 1e-3)
        a = propose_neighbor(pulse, 1.0, np.random.default_rng(7))
        b = propose_neighbor(pulse, 1.0, np.random.default_rng(7))
        self.assertTrue(a.same_as(b))


class SweepTest(unittest.TestCase):
    def setUp(self) -> None:
        self.calls = 0

    def objective(self, pulse: PulseSequence) -> float:
        self.calls += 1
        return -float(np.sum(pulse.amps_x**2 + pulse.amps_y**2))

    def test_sweep_cools_every_iteration(self) -> None:
        s = state(t0=1.0, gamma=0.9)
        result = sa_sweep(PulseSequence.zeros(4, 1e-3), self.objective, 10, s)
        self.assertEqual(result.state.iteration, 10)
        self.assertAlmostEqual(result.state.temperature, 0.9**10, places=15)
        self.assertEqual(self.calls, 11)

    def test_known_fidelity_saves_a_call(self) -> None:
        sa_sweep(PulseSequence.zeros(4, 1e-3), self.objective, 5, state(), current_fidelity=0.0)
        self.assertEqual(self.calls, 5)

    def test_zero_iterations_is_identity(self) -> None:
        pulse = PulseSequence.random(4, 1e-3, 1.0, np.random.default_rng(0))
        s = state()
        result = sa_sweep(pulse, self.objective, 0, s, current_fidelity=0.5)
        self.assertIs(result.pulse, pulse)
        self.assertIs(result.state, s)
        self.assertEqual(result.fidelity, 0.5)
        self.assertEqual(self.calls, 0)
        with self.assertRaises(AnnealError):
            sa_sweep(pulse, self.objective, -1, s)

    def test_cold_sweep_never_worsens(self) -> None:
        pulse = PulseSequence.random(6, 1e-3, 5.0, np.random.default_rng(4))
        start = self.objective(pulse)
        result = sa_sweep(pulse, self.objective, 200, state(t0=1e-12, gamma=0.99, scale=0.5))
        self.assertGreaterEqual(result.fidelity, start)
        self.assertEqual(result.fidelity, self.objective(result.pulse))

    def test_hot_sweep_accepts_everything(self) -> None:
        # δΦ stays above −1 for these tiny kicks, and Δ = −1 while T ≥ 1
        result = sa_sweep(PulseSequence.zeros(2, 1e-3), self.objective, 20, state(t0=50.0, gamma=0.99, scale=0.1))
        self.assertEqual(result.accepted, 20)

    def test_reproducible(self) -> None:
        pulse = PulseSequence.random(6, 1e-3, 5.0, np.random.default_rng(4))
        a = sa_sweep(pulse, self.objective, 30, state(seed=9))
        b = sa_sweep(pulse, self.objective, 30, state(seed=9))
        self.assertTrue(a.pulse.same_as(b.pulse))
        self.assertEqual(a.accepted, b.accepted)


if __name__ == "__main__":
    unittest.main()

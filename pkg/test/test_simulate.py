"""
Noise models, singlet-order bench, CPMG spectroscopy and the convergence benchmark.

Run with:
    python -m unittest test.test_simulate
"""

from __future__ import annotations

import csv
import math
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose

from core.errors import FitError, PulseError
from core.models import Algorithm, NoiseKind, OptimizerConfig, PulseConfig
from core.objective import ControlTask, fidelity
from core.propagate import PulseSequence, RfiDistribution
from core.simulate import (
    NoiseModel,
    SpectroscopyRow,
    benchmark_convergence,
    cpmg_decay,
    cpmg_t2,
    fit_t2,
    hard_pi_pulse,
    lorentzian_spectrum,
    noise_spectrum,
    robustness_sweep,
    singlet_order,
    singlet_order_samples,
    singlet_task,
    write_convergence_csv,
    write_curve_csv,
    write_robustness_csv,
    write_spectroscopy_csv,
)
from core.spinsys import SpinSystem
from core.tasks import selective_pi, tcp_system


def read_csv(path: Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


class NoiseModelTest(unittest.TestCase):
    def test_ou_statistics(self) -> None:
        model = NoiseModel(kind=NoiseKind.ORNSTEIN_UHLENBECK, sigma_hz=1.0, tau_c_s=1e-3)
        samples = model.sample(20, 1e-4, 20000, np.random.default_rng(0))
        self.assertEqual(samples.shape, (20000, 20))
        self.assertAlmostEqual(float(np.var(samples[:, 0])), 1.0, delta=0.05)
        self.assertAlmostEqual(float(np.var(samples[:, -1])), 1.0, delta=0.05)
        corr = float(np.mean(samples[:, 0] * samples[:, 10]))
        self.assertAlmostEqual(corr, math.exp(-1.0), delta=0.04)

    def test_uniform_bounds(self) -> None:
        model = NoiseModel(kind=NoiseKind.UNIFORM, zeta_hz=8.0)
        samples = model.sample(50, 1e-4, 100, np.random.default_rng(1))
        self.assertLessEqual(float(np.max(np.abs(samples))), 4.0)

    def test_validation(self) -> None:
        with self.assertRaises(ValueError):
            NoiseModel(sigma_hz=-1.0)
        with self.assertRaises(ValueError):
            NoiseModel(tau_c_s=0.0)

    def test_lorentzian(self) -> None:
        self.assertAlmostEqual(lorentzian_spectrum(20.0, 1e-3, 0.0), (2 * math.pi) ** 2 * 2 * 400 * 1e-3)
        half = lorentzian_spectrum(20.0, 1e-3, 1 / (2 * math.pi * 1e-3))
        self.assertAlmostEqual(half, lorentzian_spectrum(20.0, 1e-3, 0.0) / 2)


class SingletOrderTest(unittest.TestCase):
    def setUp(self) -> None:
        self.sys = tcp_system()
        self.pulse = PulseSequence.random(30, 2e-3, 300.0, np.random.default_rng(3))

    def test_zero_strength_equals_fidelity(self) -> None:
        expected = fidelity(self.sys, self.pulse, singlet_task(2), RfiDistribution())
        samples = singlet_order_samples(self.sys, self.pulse, 0.0, 5, np.random.default_rng(0))
        assert_allclose(samples, expected, rtol=0, atol=0)
        self.assertAlmostEqual(singlet_order(self.sys, self.pulse, 0.0, 3, seed=1), expected, places=12)

    def test_seeded(self) -> None:
        a = singlet_order(self.sys, self.pulse, 20.0, 8, seed=5)
        b = singlet_order(self.sys, self.pulse, 20.0, 8, seed=5)
        self.assertEqual(a, b)

    def test_invalid_arguments(self) -> None:
        with self.assertRaises(ValueError):
            singlet_order_samples(self.sys, self.pulse, 10.0, 0, np.random.default_rng(0))
        with self.assertRaises(ValueError):
            singlet_order_samples(self.sys, self.pulse, -1.0, 3, np.random.default_rng(0))

    def test_sweep_rows_and_csv(self) -> None:
        pulses = {"a": self.pulse, "b": PulseSequence.zeros(30, 2e-3)}
        rows = robustness_sweep(self.sys, pulses, [0.0, 10.0], trials=4, seed=2)
        self.assertEqual([(r.pulse_label, r.noise_strength) for r in rows], [("a", 0.0), ("b", 0.0), ("a", 10.0), ("b", 10.0)])
        self.assertEqual(rows[0].stderr, 0.0)
        with tempfile.TemporaryDirectory() as tmp:
            out = write_robustness_csv(Path(tmp) / "robustness.csv", rows)
            data = read_csv(out)
        self.assertEqual(len(data), 4)
        self.assertEqual(float(data[2]["noise_strength"]), 10.0)
        self.assertEqual(float(data[0]["mean_order"]), rows[0].mean_order)


class T2FitTest(unittest.TestCase):
    def test_exact_exponential(self) -> None:
        times = np.linspace(0.0, 0.05, 26)
        fit = fit_t2(times, 0.8 * np.exp(-times / 0.02))
        self.assertTrue(fit.fit_ok)
        self.assertAlmostEqual(fit.t2_s, 0.02, places=10)
        self.assertAlmostEqual(fit.amplitude, 1.0, places=10)

    def test_floor_drops_late_points(self) -> None:
        times = np.linspace(0.0, 1.0, 101)
        envelope = np.exp(-times / 0.1)
        fit = fit_t2(times, envelope)
        self.assertEqual(fit.points, int(np.sum(envelope >= 0.05)))
        self.assertAlmostEqual(fit.t2_s, 0.1, places=10)

    def test_flat_envelope(self) -> None:
        fit = fit_t2(np.arange(5) * 1e-3, np.ones(5))
        self.assertEqual(fit.t2_s, math.inf)
        self.assertFalse(fit.fit_ok)

    def test_too_few_points(self) -> None:
        with self.assertRaises(FitError):
            fit_t2(np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.01, 0.001]))
        with self.assertRaises(FitError):
            fit_t2(np.array([0.0]), np.array([0.0]))

    def test_spectroscopy_row(self) -> None:
        row = SpectroscopyRow.from_t2(0.005, 2.0, True, 40)
        self.assertAlmostEqual(row.nu_hz, 100.0)
        self.assertAlmostEqual(row.s_per_s, math.pi**2 / 8)
        self.assertEqual(SpectroscopyRow.from_t2(0.005, math.inf, False, 3).s_per_s, 0.0)


class CpmgTest(unittest.TestCase):
    def setUp(self) -> None:
        self.sys = SpinSystem.from_hz([0.0], [])
        self.pi = hard_pi_pulse(2 * math.pi * 50e3)

    def test_hard_pi_pulse(self) -> None:
        self.assertAlmostEqual(self.pi.duration, 1e-5)
        self.assertEqual(hard_pi_pulse(1e4, 4).n_segments, 4)
        with self.assertRaises(PulseError):
            hard_pi_pulse(0.0)

    def test_noiseless_train_keeps_magnetization(self) -> None:
        times, envelope = cpmg_decay(self.sys, self.pi, 1e-3, NoiseModel(sigma_hz=0.0), 10, 20, np.random.default_rng(0))
        self.assertEqual(times.size, 21)
        self.assertAlmostEqual(times[5], 5e-3)
        assert_allclose(envelope, 1.0, atol=1e-9)

    def test_input_checks(self) -> None:
        with self.assertRaises(PulseError):
            cpmg_decay(self.sys, self.pi, 5e-6, NoiseModel(), 10, 5, np.random.default_rng(0))
        with self.assertRaises(ValueError):
            cpmg_decay(self.sys, self.pi, 1e-3, NoiseModel(), 9, 5, np.random.default_rng(0))

    def test_faster_pulsing_extends_t2(self) -> None:
        noise = NoiseModel(kind=NoiseKind.ORNSTEIN_UHLENBECK, sigma_hz=20.0, tau_c_s=1e-3, dt_s=1e-4)
        result = noise_spectrum(self.sys, self.pi, [0.01, 0.002], noise, trials=100, max_echoes=300, seed=3)
        slow, fast = result.rows
        self.assertTrue(slow.fit_ok)
        self.assertTrue(fast.fit_ok)
        self.assertGreater(fast.t2_s, slow.t2_s)
        self.assertAlmostEqual(fast.nu_hz, 250.0)

    def test_flat_train_is_flagged_and_written(self) -> None:
        result = noise_spectrum(self.sys, self.pi, [0.005], NoiseModel(sigma_hz=0.0), trials=10, max_echoes=5, seed=0)
        row = result.rows[0]
        self.assertFalse(row.fit_ok)
        self.assertEqual(row.t2_s, math.inf)
        self.assertEqual(row.echoes, 5)
        with tempfile.TemporaryDirectory() as tmp:
            data = read_csv(write_spectroscopy_csv(Path(tmp) / "s.csv", result))
        self.assertEqual(data[0]["fit_ok"], "false")
        self.assertAlmostEqual(float(data[0]["nu_hz"]), 100.0)

    def test_cpmg_t2_without_noise_never_decays(self) -> None:
        self.assertEqual(cpmg_t2(self.sys, self.pi, 1e-3, NoiseModel(sigma_hz=0.0), 10, 8, seed=1), math.inf)

    def test_spectrum_rejects_bad_delays(self) -> None:
        with self.assertRaises(ValueError):
            noise_spectrum(self.sys, self.pi, [], NoiseModel(), 10, 5, seed=0)
        with self.assertRaises(ValueError):
            noise_spectrum(self.sys, self.pi, [0.01, -0.01], NoiseModel(), 10, 5, seed=0)


class BenchmarkTest(unittest.TestCase):
    def setUp(self) -> None:
        self.sys = SpinSystem.from_hz([0.0], [])
        self.task = ControlTask.gate_synthesis(selective_pi(1), label="x-pi")
        self.pulse_config = PulseConfig(duration_s=1e-3, segments=10)
        self.algorithms = [
            OptimizerConfig(algorithm=Algorithm.GRAPE, epsilon=1e7, max_iters=4, target_fidelity=1.0),
            OptimizerConfig(algorithm=Algorithm.SAGRAPE, kappa=2, epsilon=1e7, max_iters=4, target_fidelity=1.0),
        ]

    def _run(self, seed: int = 1):
        return benchmark_convergence(
            self.sys, self.task, RfiDistribution(), self.pulse_config, self.algorithms,
            trials=2, budget_s=None, seed=seed,
        )

    def test_shared_starts_and_determinism(self) -> None:
        a, b = self._run(), self._run()
        self.assertEqual(list(a.runs), ["GRAPE", "SAGRAPE-2"])
        for label in a.runs:
            for run_a, run_b in zip(a.runs[label], b.runs[label]):
                self.assertEqual([p.fidelity for p in run_a.trace], [p.fidelity for p in run_b.trace])
        # both algorithms start trial k from the same pulse
        for k in range(2):
            self.assertEqual(a.runs["GRAPE"][k].trace[0].fidelity, a.runs["SAGRAPE-2"][k].trace[0].fidelity)
        self.assertNotEqual(a.runs["GRAPE"][0].trace[0].fidelity, a.runs["GRAPE"][1].trace[0].fidelity)

    def test_curves_and_csv(self) -> None:
        result = self._run()
        curve = result.curves["GRAPE"]
        self.assertEqual(len(curve), 5)
        expected = np.mean([1.0 - r.trace[-1].fidelity for r in result.runs["GRAPE"]])
        self.assertAlmostEqual(curve[-1].mean_infidelity, float(expected))
        with tempfile.TemporaryDirectory() as tmp:
            rows = read_csv(write_convergence_csv(Path(tmp) / "c.csv", result))
            curve_rows = read_csv(write_curve_csv(Path(tmp) / "curve.csv", result))
        groups = {(r["algorithm"], r["trial"]) for r in rows}
        self.assertEqual(groups, {("GRAPE", "0"), ("GRAPE", "1"), ("SAGRAPE-2", "0"), ("SAGRAPE-2", "1")})
        self.assertEqual(len(rows), 4 * 5)
        self.assertEqual(len(curve_rows), 10)

    def test_duplicate_labels(self) -> None:
        with self.assertRaises(ValueError):
            benchmark_convergence(
                self.sys, self.task, RfiDistribution(), self.pulse_config, [self.algorithms[0]] * 2,
                trials=1, budget_s=None, seed=0,
            )


if __name__ == "__main__":
    unittest.main()

"""
Shape file export / import.

Run with:
    python -m unittest test.test_shapes
"""

from __future__ import annotations

import math
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from core.errors import ShapeFormatError
from core.propagate import PulseSequence
from core.shapes import export_pulse, format_pulse, import_pulse, parse_pulse

SAMPLE = """\
# segments=3
# tau_s=0.001
# label=demo
1 100 0 0
2 200 1.5707963267948966 1
3 0 0 0
"""


class FormatTest(unittest.TestCase):
    def test_layout(self) -> None:
        pulse = PulseSequence(
            tau=0.001, amps_x=np.array([100.0, 0.0]), amps_y=np.array([0.0, 0.0]), frozen=np.array([True, False])
        )
        text = format_pulse(pulse, {"label": "demo"})
        self.assertEqual(text, "# segments=2\n# tau_s=0.001\n# label=demo\n1 100 0 1\n2 0 0 0\n")

    def test_parse_sample(self) -> None:
        pulse = parse_pulse(SAMPLE)
        self.assertEqual(pulse.n_segments, 3)
        self.assertEqual(pulse.tau, 0.001)
        assert_allclose(pulse.amps_x, [100.0, 0.0, 0.0], atol=1e-12)
        assert_allclose(pulse.amps_y, [0.0, 200.0, 0.0], atol=1e-12)
        assert_array_equal(pulse.frozen, [False, True, False])

    def test_round_trip(self) -> None:
        pulse = PulseSequence.random(40, 3.16e-4, 2e3, np.random.default_rng(8)).with_segments([5, 6], 9941.0, 0.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = export_pulse(pulse, Path(tmp) / "nested" / "p.shape", {"fidelity": "0.5"})
            back = import_pulse(path)
        self.assertEqual(back.tau, pulse.tau)
        assert_allclose(back.amps_x, pulse.amps_x, rtol=1e-14, atol=1e-10)
        assert_allclose(back.amps_y, pulse.amps_y, rtol=1e-14, atol=1e-10)
        assert_array_equal(back.frozen, pulse.frozen)
        self.assertEqual(back.amps_x[5], 9941.0)


class ParseErrorTest(unittest.TestCase):
    def assert_line(self, text: str, line: int | None) -> ShapeFormatError:
        with self.assertRaises(ShapeFormatError) as ctx:
            parse_pulse(text)
        self.assertEqual(ctx.exception.line, line)
        return ctx.exception

    def test_wrong_field_count(self) -> None:
        exc = self.assert_line("# segments=2\n# tau_s=0.001\n1 100 0 0\n2 100 0\n", 4)
        self.assertTrue(str(exc).startswith("line 4: "))

    def test_bad_number(self) -> None:
        self.assert_line("# segments=1\n# tau_s=0.001\n1 abc 0 0\n", 3)

    def test_index_gap(self) -> None:
        self.assert_line("# segments=2\n# tau_s=0.001\n1 1 0 0\n3 1 0 0\n", 4)

    def test_bad_frozen_flag(self) -> None:
        self.assert_line("# segments=1\n# tau_s=0.001\n1 1 0 2\n", 3)

    def test_negative_amplitude(self) -> None:
        self.assert_line("# segments=1\n# tau_s=0.001\n1 -1 0 0\n", 3)

    def test_non_finite(self) -> None:
        self.assert_line(f"# segments=1\n# tau_s=0.001\n1 {math.inf} 0 0\n", 3)

    def test_missing_header(self) -> None:
        self.assert_line("# segments=1\n1 1 0 0\n", 1)

    def test_count_mismatch(self) -> None:
        self.assert_line("# segments=3\n# tau_s=0.001\n1 1 0 0\n", 3)

    def test_bad_tau(self) -> None:
        self.assert_line("# segments=1\n# tau_s=-1\n1 1 0 0\n", 1)

    def test_import_names_the_file(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.shape"
            path.write_text("# segments=1\n# tau_s=0.001\n1 1 0\n", encoding="utf-8")
            with self.assertRaises(ShapeFormatError) as ctx:
                import_pulse(path)
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn("broken.shape", str(ctx.exception))
        self.assertEqual(str(ctx.exception).count("line 3"), 1)

    def test_missing_file(self) -> None:
        with self.assertRaises(ShapeFormatError) as ctx:
            import_pulse("/nonexistent/pulse.shape")
        self.assertIsNone(ctx.exception.line)


if __name__ == "__main__":
    unittest.main()

"""
core/shapes.py
~~~~~~~~~~~~~~
Plain-text pulse shape files.

Format::

    # segments=250
    # tau_s=0.000316
    1 9941 0 1
    2 123.4567 -1.5707963267948966 0
    ...

Data lines are ``<index> <amplitude rad/s> <phase rad> <frozen 0|1>`` with
1-based indices; amplitude and phase use 17 significant digits. Other
``# key=value`` header lines are kept as free-form metadata and ignored on
import.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from core.errors import PulseError, ShapeFormatError
from core.propagate import PulseSequence

logger = logging.getLogger("sagrape.shapes")

_REQUIRED_HEADERS = ("segments", "tau_s")


def format_pulse(pulse: PulseSequence, metadata: dict[str, str] | None = None) -> str:
    lines = [f"# segments={pulse.n_segments}", f"# tau_s={pulse.tau:.17g}"]
    for key, value in (metadata or {}).items():
        lines.append(f"# {key}={value}")
    amplitude = pulse.amplitude
    phase = pulse.phase
    for j in range(pulse.n_segments):
        lines.append(f"{j + 1} {amplitude[j]:.17g} {phase[j]:.17g} {int(pulse.frozen[j])}")
    return "\n".join(lines) + "\n"


def export_pulse(pulse: PulseSequence, path: str | Path, metadata: dict[str, str] | None = None) -> Path:
    """Write ``pulse`` as a shape file; returns the path written."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_pulse(pulse, metadata), encoding="utf-8")
    logger.debug("Wrote %d segments to %s", pulse.n_segments, out)
    return out


def parse_pulse(text: str) -> PulseSequence:
    headers: dict[str, str] = {}
    rows: list[tuple[float, float, bool]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep and not rows:
                headers[key.strip()] = value.strip()
            continue

        fields = line.split()
        if len(fields) != 4:
            raise ShapeFormatError(f"expected 4 fields, got {len(fields)}", line=lineno)
        try:
            index = int(fields[0])
            amplitude = float(fields[1])
            phase = float(fields[2])
            frozen = int(fields[3])
        except ValueError:
            raise ShapeFormatError(f"unparseable data line: {line!r}", line=lineno) from None
        if index != len(rows) + 1:
            raise ShapeFormatError(f"expected segment index {len(rows) + 1}, got {index}", line=lineno)
        if frozen not in (0, 1):
            raise ShapeFormatError(f"frozen flag must be 0 or 1, got {frozen}", line=lineno)
        if not (math.isfinite(amplitude) and math.isfinite(phase)) or amplitude < 0:
            raise ShapeFormatError("amplitude must be finite and non-negative, phase finite", line=lineno)
        rows.append((amplitude, phase, bool(frozen)))

    for key in _REQUIRED_HEADERS:
        if key not in headers:
            raise ShapeFormatError(f"missing header '# {key}='", line=1)
    try:
        n_segments = int(headers["segments"])
        tau = float(headers["tau_s"])
    except ValueError:
        raise ShapeFormatError("segments / tau_s headers are not numbers", line=1) from None
    if n_segments != len(rows):
        raise ShapeFormatError(f"header says {n_segments} segments, found {len(rows)}", line=len(text.splitlines()))

    data = np.array([(a, p) for a, p, _ in rows], dtype=float).reshape(-1, 2)
    frozen_mask = np.array([f for _, _, f in rows], dtype=bool)
    try:
        return PulseSequence.from_polar(tau, data[:, 0], data[:, 1], frozen_mask)
    except PulseError as exc:
        raise ShapeFormatError(str(exc), line=1) from None


def import_pulse(path: str | Path) -> PulseSequence:
    """Read a shape file written by ``export_pulse``."""
    src = Path(path)
    if not src.exists():
        raise ShapeFormatError(f"Shape file not found: {src}")
    try:
        pulse = parse_pulse(src.read_text(encoding="utf-8"))
    except ShapeFormatError as exc:
        raise ShapeFormatError(f"{src}: {exc.detail}", line=exc.line) from None
    logger.debug("Read %r from %s", pulse, src)
    return pulse

"""
utils/helpers.py
~~~~~~~~~~~~~~~~
Shared CLI helpers: banner and result tables.
"""

from __future__ import annotations

import math
from typing import Sequence

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from core import __version__
from core.hybrid import OptimizationResult
from core.models import RunConfig
from core.simulate import BenchmarkResult, RobustnessRow, SpectroscopyResult

console = Console()

BANNER = r"""
   _____ ___   __________  ___    ____  ______
  / ___//   | / ____/ __ \/   |  / __ \/ ____/
  \__ \/ /| |/ / __/ /_/ / /| | / /_/ / __/
 ___/ / ___ / /_/ / _, _/ ___ |/ ____/ /___
/____/_/  |_\____/_/ |_/_/  |_/_/   /_____/
"""


def show_banner() -> None:
    """Print ASCII banner with version."""
    console.print(
        Panel(
            f"[bold cyan]{BANNER}[/bold cyan]\n"
            f"  [dim]v{__version__}  annealing-assisted pulse engineering[/dim]",
            border_style="cyan",
            expand=False,
        )
    )


def _num(value: float, fmt: str = ".6f") -> str:
    if math.isnan(value):
        return "[red]nan[/]"
    if math.isinf(value):
        return "∞"
    return format(value, fmt)


def show_config_summary(config: RunConfig) -> None:
    """Render the resolved config blocks as a Rich table."""
    table = Table(title="Run Configuration", show_lines=True)
    table.add_column("Block", style="bold")
    table.add_column("Details")

    sc = config.system
    surrogate = "  [yellow](surrogate values)[/]" if sc.surrogate else ""
    table.add_row("system", f"{sc.label or '-'}  n={sc.n}  offsets={sc.offsets_hz} Hz{surrogate}")
    if config.task is not None:
        table.add_row("task", config.task.model_dump_json())
    if config.pulse is not None:
        pc = config.pulse
        table.add_row("pulse", f"T={pc.duration_s:g}s  N={pc.segments}  τ={pc.tau:.4g}s  init={pc.initial.value}")
    table.add_row("rfi", f"scales={config.rfi.scales}  probs={config.rfi.probs}")
    oc = config.optimizer
    table.add_row(
        "optimizer",
        f"{oc.display_label}  ε={oc.epsilon if oc.epsilon is not None else 'sweep'}  "
        f"max_iters={oc.max_iters}  target={oc.target_fidelity}  seed={oc.seed}",
    )
    for name in ("benchmark", "noisespec", "robustness"):
        block = getattr(config, name)
        if block is not None:
            table.add_row(name, "[green]✓[/] present")
    console.print(table)


def show_result_table(result: OptimizationResult) -> None:
    """One-row summary of an optimization run."""
    table = Table(title="Optimization Result", show_lines=True)
    table.add_column("Algorithm", style="bold")
    table.add_column("Φ final", justify="right")
    table.add_column("Φ max", justify="right")
    table.add_column("Φ/Φ max", justify="right")
    table.add_column("Iterations", justify="right")
    table.add_column("Evals", justify="right")
    table.add_column("Time (s)", justify="right")
    table.add_column("Stop")

    table.add_row(
        result.label,
        _num(result.final_fidelity),
        _num(result.attainable),
        _num(result.relative_fidelity),
        str(result.iterations),
        str(result.evaluations),
        _num(result.elapsed_s, ".2f"),
        result.stop_reason.value,
    )
    console.print(table)


def show_benchmark_table(result: BenchmarkResult) -> None:
    """Final mean infidelity per algorithm."""
    table = Table(title="Convergence Benchmark", show_lines=True)
    table.add_column("Algorithm", style="bold")
    table.add_column("Trials", justify="right")
    table.add_column("⟨1−Φ⟩ final", justify="right")
    table.add_column("± stderr", justify="right")
    table.add_column("⟨evals⟩", justify="right")
    table.add_column("⟨time⟩ (s)", justify="right")

    for label, curve in result.curves.items():
        last = curve[-1]
        table.add_row(
            label,
            str(len(result.runs[label])),
            _num(last.mean_infidelity, ".3e"),
            _num(last.stderr, ".1e"),
            _num(last.mean_evals, ".0f"),
            _num(last.mean_wallclock_s, ".2f"),
        )
    console.print(table)


def show_spectroscopy_table(result: SpectroscopyResult) -> None:
    table = Table(title=f"CPMG Noise Spectrum ({result.trials} trials)", show_lines=True)
    table.add_column("δ (s)", justify="right")
    table.add_column("ν (Hz)", justify="right")
    table.add_column("T2 (s)", justify="right")
    table.add_column("S (s⁻¹)", justify="right")
    table.add_column("Echoes", justify="right")
    table.add_column("Fit", justify="center")

    for row in result.rows:
        table.add_row(
            _num(row.delta_s, ".4g"),
            _num(row.nu_hz, ".4g"),
            _num(row.t2_s, ".4g"),
            _num(row.s_per_s, ".4g"),
            str(row.echoes),
            "[green]✓[/]" if row.fit_ok else "[red]✗[/]",
        )
    console.print(table)


def show_robustness_table(rows: Sequence[RobustnessRow]) -> None:
    table = Table(title="Singlet-Order Robustness", show_lines=True)
    table.add_column("Pulse", style="bold")
    table.add_column("ζ (Hz)", justify="right")
    table.add_column("⟨order⟩", justify="right")
    table.add_column("± stderr", justify="right")
    table.add_column("Trials", justify="right")

    for row in rows:
        table.add_row(
            row.pulse_label,
            _num(row.noise_strength, "g"),
            _num(row.mean_order, ".5f"),
            _num(row.stderr, ".1e"),
            str(row.trials),
        )
    console.print(table)

"""
interface/commands.py
~~~~~~~~~~~~~~~~~~~~~
Sub-command handlers behind ``main.py``.

Each handler takes a loaded ``RunConfig`` plus the command-line overrides and
returns the process exit status. Engine errors propagate to ``main`` which
maps them onto exit codes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from core.errors import ConfigError
from core.hybrid import freeze_cpmg, optimize, seed_streams
from core.manager import RunManager, TraceWriter
from core.models import RunConfig, StopReason
from core.propagate import PulseSequence, RfiDistribution
from core.shapes import export_pulse, import_pulse
from core.simulate import (
    NoiseModel,
    benchmark_convergence,
    hard_pi_pulse,
    noise_spectrum,
    robustness_sweep,
    write_convergence_csv,
    write_curve_csv,
    write_robustness_csv,
    write_spectroscopy_csv,
)
from core.spinsys import SpinSystem
from core.tasks import build_task, initial_pulse
from utils.helpers import (
    console,
    show_benchmark_table,
    show_config_summary,
    show_result_table,
    show_robustness_table,
    show_spectroscopy_table,
)

logger = logging.getLogger("sagrape.commands")

EXIT_OK = 0
EXIT_INTERRUPTED = 130


@dataclass(frozen=True)
class CommandOptions:
    """Command-line overrides shared by every sub-command."""
    out: Path | None = None
    seed: int | None = None
    jobs: int = 1


def apply_overrides(config: RunConfig, options: CommandOptions) -> RunConfig:
    """Fold ``--seed`` / ``--out`` into the config so the manifest echoes them."""
    update: dict = {}
    if options.seed is not None:
        update["optimizer"] = config.optimizer.model_copy(update={"seed": options.seed})
    if options.out is not None:
        update["output_dir"] = str(Path(options.out).resolve())
    return config.model_copy(update=update) if update else config


def _rfi(config: RunConfig) -> RfiDistribution:
    return RfiDistribution(tuple(config.rfi.scales), tuple(config.rfi.probs))


def _system(config: RunConfig) -> SpinSystem:
    spins = config.system.build()
    if config.system.surrogate:
        logger.warning("System '%s' uses surrogate parameters, not measured values", spins.label or "?")
    return spins


def _manager(config: RunConfig, command: str, options: CommandOptions) -> RunManager:
    return RunManager(
        config,
        command,
        jobs=options.jobs,
        out_dir=config.resolve_path(config.output_dir),
        seeds={"seed": config.optimizer.seed},
    )


# ──────────────────────────────────────────────
#  optimize
# ──────────────────────────────────────────────

def cmd_optimize(config: RunConfig, options: CommandOptions) -> int:
    """Optimize one pulse; writes pulse.shape, trace.csv, result.json, manifest.json."""
    config = apply_overrides(config, options)
    config.require("task", "pulse")
    spins = _system(config)
    task = build_task(config.task, spins.n)  # type: ignore[arg-type]
    rfi = _rfi(config)
    pulse0 = initial_pulse(config.pulse, seed_streams(config.optimizer.seed).pulse, config.resolve_path)  # type: ignore[arg-type]

    with _manager(config, "optimize", options) as run:
        with TraceWriter(run.path("trace.csv")) as trace:
            result = optimize(
                spins,
                task,
                rfi,
                pulse0,
                config.optimizer,
                amp_max=config.pulse.amp_max_rad_s,  # type: ignore[union-attr]
                executor=run.executor,
                stop_check=run.stop_requested,
                on_record=trace,
            )

        export_pulse(
            result.best_pulse,
            run.path("pulse.shape"),
            metadata={"label": result.label, "fidelity": f"{result.final_fidelity:.17g}"},
        )
        summary = {"system": spins.label, "task": task.label, **result.summary()}
        run.write_json("result.json", summary)
        run.note("stop_reason", result.stop_reason.value)

    show_result_table(result)
    console.print(f"[dim]Artifacts in {run.out_dir}[/dim]")
    return EXIT_INTERRUPTED if result.stop_reason == StopReason.INTERRUPTED else EXIT_OK


# ──────────────────────────────────────────────
#  benchmark
# ──────────────────────────────────────────────

def cmd_benchmark(config: RunConfig, options: CommandOptions) -> int:
    """Convergence comparison; writes convergence.csv and convergence_curve.csv."""
    config = apply_overrides(config, options)
    config.require("task", "pulse", "benchmark")
    spins = _system(config)
    task = build_task(config.task, spins.n)  # type: ignore[arg-type]
    bench = config.benchmark

    with _manager(config, "benchmark", options) as run:
        result = benchmark_convergence(
            spins,
            task,
            _rfi(config),
            config.pulse,  # type: ignore[arg-type]
            bench.algorithms,  # type: ignore[union-attr]
            trials=bench.trials,  # type: ignore[union-attr]
            budget_s=bench.budget_s,  # type: ignore[union-attr]
            seed=config.optimizer.seed,
            executor=run.executor,
            stop_check=run.stop_requested,
        )
        write_convergence_csv(run.path("convergence.csv"), result)
        write_curve_csv(run.path("convergence_curve.csv"), result)
        run.note(
            "step_sizes",
            {label: runs[0].epsilon for label, runs in result.runs.items()},
        )
        interrupted = run.stop_requested()

    show_benchmark_table(result)
    return EXIT_INTERRUPTED if interrupted else EXIT_OK


# ──────────────────────────────────────────────
#  noisespec
# ──────────────────────────────────────────────

def _pi_pulse(config: RunConfig) -> PulseSequence:
    block = config.noisespec
    if block.pi_pulse_file:  # type: ignore[union-attr]
        return import_pulse(config.resolve_path(block.pi_pulse_file))  # type: ignore[union-attr]
    return hard_pi_pulse(block.pi_amplitude_rad_s, block.pi_segments)  # type: ignore[union-attr]


def cmd_noisespec(config: RunConfig, options: CommandOptions) -> int:
    """CPMG noise spectroscopy; writes spectroscopy.csv."""
    config = apply_overrides(config, options)
    config.require("noisespec")
    spins = _system(config)
    block = config.noisespec
    pi_pulse = _pi_pulse(config)

    with _manager(config, "noisespec", options) as run:
        result = noise_spectrum(
            spins,
            pi_pulse,
            block.deltas_s,  # type: ignore[union-attr]
            NoiseModel.from_config(block.noise),  # type: ignore[union-attr]
            trials=block.trials,  # type: ignore[union-attr]
            max_echoes=block.max_echoes,  # type: ignore[union-attr]
            seed=config.optimizer.seed,
            executor=run.executor,
        )
        write_spectroscopy_csv(run.path("spectroscopy.csv"), result)
        run.note("flagged_rows", sum(1 for row in result.rows if not row.fit_ok))

    show_spectroscopy_table(result)
    return EXIT_OK


# ──────────────────────────────────────────────
#  robustness
# ──────────────────────────────────────────────

def cmd_robustness(config: RunConfig, options: CommandOptions) -> int:
    """Singlet order of labelled pulses across noise strengths; writes robustness.csv."""
    config = apply_overrides(config, options)
    config.require("robustness")
    spins = _system(config)
    if spins.n < 2:
        raise ConfigError("system.n: the singlet-order bench needs at least 2 spins", key="system.n")
    block = config.robustness
    pulses = {label: import_pulse(config.resolve_path(path)) for label, path in block.pulses.items()}  # type: ignore[union-attr]

    with _manager(config, "robustness", options) as run:
        rows = robustness_sweep(
            spins,
            pulses,
            block.strengths_hz,  # type: ignore[union-attr]
            trials=block.trials,  # type: ignore[union-attr]
            seed=config.optimizer.seed,
            rfi=_rfi(config),
            executor=run.executor,
        )
        write_robustness_csv(run.path("robustness.csv"), rows)

    show_robustness_table(rows)
    return EXIT_OK


# ──────────────────────────────────────────────
#  export / validate
# ──────────────────────────────────────────────

def configured_pulse(config: RunConfig) -> PulseSequence:
    """The initial pulse ``optimize`` would start from, CPMG blocks included."""
    config.require("pulse")
    pulse = initial_pulse(config.pulse, seed_streams(config.optimizer.seed).pulse, config.resolve_path)  # type: ignore[arg-type]
    cpmg = config.optimizer.cpmg
    return freeze_cpmg(pulse, cpmg.n_pulses, cpmg.pi_amplitude_rad_s) if cpmg else pulse


def cmd_export(config: RunConfig, options: CommandOptions) -> int:
    """Write the configured initial pulse as initial.shape."""
    config = apply_overrides(config, options)
    pulse = configured_pulse(config)
    with _manager(config, "export", options) as run:
        target = export_pulse(pulse, run.path("initial.shape"), metadata={"label": "initial"})
    console.print(f"Exported {pulse!r} to {target}")
    return EXIT_OK


def cmd_validate(config: RunConfig, options: CommandOptions) -> int:
    """Parse and build every configured block without running anything."""
    config = apply_overrides(config, options)
    spins = _system(config)
    if config.task is not None:
        task = build_task(config.task, spins.n)
        logger.info("Task %s: attainable Φ = %.6f", task.label, task.attainable())
    if config.pulse is not None:
        configured_pulse(config)
    _rfi(config)
    if config.noisespec is not None:
        _pi_pulse(config)
    if config.robustness is not None:
        for path in config.robustness.pulses.values():
            import_pulse(config.resolve_path(path))
    show_config_summary(config)
    console.print("[green]Config is valid[/green]")
    return EXIT_OK


COMMANDS = {
    "optimize": cmd_optimize,
    "benchmark": cmd_benchmark,
    "noisespec": cmd_noisespec,
    "robustness": cmd_robustness,
    "export": cmd_export,
    "validate": cmd_validate,
}

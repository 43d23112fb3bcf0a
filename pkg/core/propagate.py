"""
core/propagate.py
~~~~~~~~~~~~~~~~~
Piecewise-constant pulse sequences and their propagators.

Responsibilities:
- PulseSequence / RfiDistribution / NoiseTrajectory value types
- Segment Hamiltonians H^m(j) = H_0 + r_m(ω_x H_x + ω_y H_y) [+ 2π η(j) H_z]
- Matrix exponential of Hermitian generators via eigendecomposition
- Time-ordered products and state evolution

Product order is fixed: U = U_N ··· U_2 U_1, segment 1 acts first.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from core.errors import OperatorError, PulseError
from core.spinsys import Operator, SpinSystem, is_hermitian

logger = logging.getLogger("sagrape.propagate")

PROBABILITY_ATOL = 1e-12


def _frozen_array(values: ArrayLike, dtype: type) -> NDArray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# ──────────────────────────────────────────────
#  Value types
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class PulseSequence:
    """
    N piecewise-constant segments of duration ``tau`` with (ω_x, ω_y) in rad/s.

    ``frozen[j]`` excludes segment j from every optimizer update. Arrays are
    read-only; every transformation returns a new sequence.
    """

    tau: float
    amps_x: NDArray[np.float64]
    amps_y: NDArray[np.float64]
    frozen: NDArray[np.bool_] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        amps_x = _frozen_array(self.amps_x, float)
        amps_y = _frozen_array(self.amps_y, float)
        frozen = np.zeros(amps_x.shape, dtype=bool) if self.frozen is None else self.frozen
        frozen = _frozen_array(frozen, bool)

        if amps_x.ndim != 1 or amps_x.size < 1:
            raise PulseError("A pulse needs at least one segment")
        if amps_y.shape != amps_x.shape or frozen.shape != amps_x.shape:
            raise PulseError(
                f"amps_x, amps_y and frozen must share length, got {amps_x.size}/{amps_y.size}/{frozen.size}"
            )
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise PulseError(f"Segment duration must be positive, got: {self.tau}")
        if not (np.all(np.isfinite(amps_x)) and np.all(np.isfinite(amps_y))):
            raise PulseError("Pulse amplitudes must be finite")

        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "amps_x", amps_x)
        object.__setattr__(self, "amps_y", amps_y)
        object.__setattr__(self, "frozen", frozen)

    # ── Constructors ──

    @classmethod
    def zeros(cls, n_segments: int, tau: float) -> "PulseSequence":
        return cls(tau=tau, amps_x=np.zeros(n_segments), amps_y=np.zeros(n_segments))

    @classmethod
    def random(cls, n_segments: int, tau: float, scale: float, rng: np.random.Generator) -> "PulseSequence":
        """Amplitudes drawn uniformly from [−scale, scale] rad/s."""
        amps = rng.uniform(-scale, scale, size=(2, n_segments))
        return cls(tau=tau, amps_x=amps[0], amps_y=amps[1])

    @classmethod
    def from_polar(
        cls,
        tau: float,
        amplitude: ArrayLike,
        phase: ArrayLike,
        frozen: ArrayLike | None = None,
    ) -> "PulseSequence":
        amplitude = np.asarray(amplitude, dtype=float)
        phase = np.asarray(phase, dtype=float)
        return cls(
            tau=tau,
            amps_x=amplitude * np.cos(phase),
            amps_y=amplitude * np.sin(phase),
            frozen=frozen,
        )

    # ── Properties ──

    @property
    def n_segments(self) -> int:
        return int(self.amps_x.size)

    @property
    def duration(self) -> float:
        return self.n_segments * self.tau

    @property
    def amplitude(self) -> NDArray[np.float64]:
        return np.hypot(self.amps_x, self.amps_y)

    @property
    def phase(self) -> NDArray[np.float64]:
        return np.arctan2(self.amps_y, self.amps_x)

    # ── Transformations ──

    def with_amplitudes(self, amps_x: ArrayLike, amps_y: ArrayLike) -> "PulseSequence":
        """New sequence with updated amplitudes; frozen segments keep their values bit-exactly."""
        new_x = np.array(amps_x, dtype=float, copy=True)
        new_y = np.array(amps_y, dtype=float, copy=True)
        new_x[self.frozen] = self.amps_x[self.frozen]
        new_y[self.frozen] = self.amps_y[self.frozen]
        return PulseSequence(tau=self.tau, amps_x=new_x, amps_y=new_y, frozen=self.frozen)

    def with_segments(
        self,
        indices: ArrayLike,
        amp_x: float,
        amp_y: float,
        freeze: bool = True,
    ) -> "PulseSequence":
        """Overwrite the given segments (ignoring the freeze mask) and optionally freeze them."""
        idx = np.asarray(indices, dtype=int)
        new_x = self.amps_x.copy()
        new_y = self.amps_y.copy()
        mask = self.frozen.copy()
        new_x[idx] = amp_x
        new_y[idx] = amp_y
        if freeze:
            mask[idx] = True
        return PulseSequence(tau=self.tau, amps_x=new_x, amps_y=new_y, frozen=mask)

    def clipped(self, amp_max: float | None) -> "PulseSequence":
        """Clip unfrozen amplitudes to [−amp_max, amp_max] per quadrature."""
        if amp_max is None:
            return self
        return self.with_amplitudes(
            np.clip(self.amps_x, -amp_max, amp_max),
            np.clip(self.amps_y, -amp_max, amp_max),
        )

    def same_as(self, other: "PulseSequence") -> bool:
        """Bitwise equality of all fields."""
        return (
            self.tau == other.tau
            and np.array_equal(self.amps_x, other.amps_x)
            and np.array_equal(self.amps_y, other.amps_y)
            and np.array_equal(self.frozen, other.frozen)
        )

    def __repr__(self) -> str:
        return (
            f"<PulseSequence N={self.n_segments} tau={self.tau:.3g}s "
            f"frozen={int(self.frozen.sum())} max|ω|={float(self.amplitude.max()):.4g} rad/s>"
        )


@dataclass(frozen=True)
class RfiDistribution:
    """RF-inhomogeneity ensemble: scale factors r_m with probabilities p_m."""

    scales: tuple[float, ...] = (1.0,)
    probs: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        scales = tuple(float(s) for s in self.scales)
        probs = tuple(float(p) for p in self.probs)
        if not scales:
            raise PulseError("RFI distribution needs at least one member")
        if len(scales) != len(probs):
            raise PulseError(f"RFI scales and probs must have equal length, got {len(scales)}/{len(probs)}")
        if any(p < 0 for p in probs):
            raise PulseError("RFI probabilities must be non-negative")
        total = math.fsum(probs)
        if abs(total - 1.0) > PROBABILITY_ATOL:
            raise PulseError(f"RFI probabilities must sum to 1, got: {total!r}")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "probs", probs)

    def __iter__(self) -> Iterator[tuple[float, float]]:
        """Yield (r_m, p_m) pairs in member order."""
        return iter(zip(self.scales, self.probs))

    def __len__(self) -> int:
        return len(self.scales)


@dataclass(frozen=True, eq=False)
class NoiseTrajectory:
    """Per-segment dephasing field η(j) in Hz, bounded by ±zeta/2."""

    etas: NDArray[np.float64]
    zeta: float

    def __post_init__(self) -> None:
        etas = _frozen_array(self.etas, float)
        if etas.ndim != 1:
            raise PulseError("Noise trajectory must be one-dimensional")
        if self.zeta < 0:
            raise PulseError(f"Noise range must be non-negative, got: {self.zeta}")
        if etas.size and float(np.max(np.abs(etas))) > self.zeta / 2:
            raise PulseError(f"Noise values must lie within ±{self.zeta / 2} Hz")
        object.__setattr__(self, "etas", etas)
        object.__setattr__(self, "zeta", float(self.zeta))

    @classmethod
    def sample(cls, n_segments: int, zeta: float, rng: np.random.Generator) -> "NoiseTrajectory":
        """η(j) ~ Uniform[−ζ/2, ζ/2], independent per segment."""
        return cls(etas=rng.uniform(-zeta / 2, zeta / 2, size=n_segments), zeta=zeta)


# ──────────────────────────────────────────────
#  Matrix exponential
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class SegmentSpectra:
    """Eigendecomposition H = V diag(w) V† and the propagators exp(−iτH) of a stack of generators."""

    tau: float
    energies: NDArray[np.float64]
    vectors: NDArray[np.complex128]
    propagators: NDArray[np.complex128]


def diagonalize(hamiltonians: NDArray, tau: float) -> SegmentSpectra:
    """Eigendecompose one generator (d×d) or a stack (…×d×d) and exponentiate."""
    h = np.asarray(hamiltonians, dtype=complex)
    if not is_hermitian(h):
        raise OperatorError("Generator must be Hermitian")
    energies, vectors = np.linalg.eigh(h)
    phases = np.exp(-1j * tau * energies)
    props = (vectors * phases[..., None, :]) @ np.swapaxes(vectors, -1, -2).conj()
    return SegmentSpectra(tau=tau, energies=energies, vectors=vectors, propagators=props)


def expm_hermitian(H: NDArray, tau: float) -> Operator:
    """U = exp(−iτH) = V exp(−iτΛ) V† for Hermitian H (single matrix or stack)."""
    return diagonalize(H, tau).propagators


# ──────────────────────────────────────────────
#  Hamiltonians and propagators
# ──────────────────────────────────────────────

def segment_hamiltonian(
    sys: SpinSystem,
    pulse: PulseSequence,
    j: int,
    r: float = 1.0,
    eta_j: float | None = None,
) -> Operator:
    """
    H(j) = H_0 + r(ω_x(j) H_x + ω_y(j) H_y) [+ 2π η_j H_z] for 1-based segment j.
    """
    if not 1 <= j <= pulse.n_segments:
        raise OperatorError(f"Segment index must be between 1-{pulse.n_segments}, got: {j}")
    hx, hy = sys.controls
    h = sys.drift + r * (pulse.amps_x[j - 1] * hx + pulse.amps_y[j - 1] * hy)
    if eta_j is not None:
        h = h + 2 * math.pi * eta_j * sys.dephasing
    return h


def segment_hamiltonians(
    sys: SpinSystem,
    pulse: PulseSequence,
    r: float = 1.0,
    etas: NDArray | None = None,
) -> NDArray[np.complex128]:
    """All N segment Hamiltonians stacked as an (N, d, d) array."""
    hx, hy = sys.controls
    ax = r * pulse.amps_x[:, None, None]
    ay = r * pulse.amps_y[:, None, None]
    h = sys.drift[None] + ax * hx[None] + ay * hy[None]
    if etas is not None:
        etas = np.asarray(etas, dtype=float)
        if etas.shape != (pulse.n_segments,):
            raise OperatorError(f"Noise trajectory length {etas.size} != segment count {pulse.n_segments}")
        h = h + (2 * math.pi * etas)[:, None, None] * sys.dephasing[None]
    return h


def segment_spectra(
    sys: SpinSystem,
    pulse: PulseSequence,
    r: float = 1.0,
    etas: NDArray | None = None,
) -> SegmentSpectra:
    return diagonalize(segment_hamiltonians(sys, pulse, r, etas), pulse.tau)


def segment_propagators(
    sys: SpinSystem,
    pulse: PulseSequence,
    r: float = 1.0,
    etas: NDArray | None = None,
) -> NDArray[np.complex128]:
    """Stack of U_j = exp(−iτH(j)), shape (N, d, d)."""
    return segment_spectra(sys, pulse, r, etas).propagators


def total_propagator(segment_Us: Sequence[NDArray] | NDArray) -> Operator:
    """Time-ordered product U_N ··· U_2 U_1 (the first element acts first)."""
    if len(segment_Us) == 0:
        raise OperatorError("Need at least one segment propagator")
    dim = np.shape(segment_Us[0])
    if len(dim) != 2 or dim[0] != dim[1]:
        raise OperatorError(f"Segment propagators must be square, got shape {dim}")

    total = np.eye(dim[0], dtype=complex)
    for idx, u in enumerate(segment_Us):
        if np.shape(u) != dim:
            raise OperatorError(f"Segment {idx + 1} has shape {np.shape(u)}, expected {dim}")
        total = u @ total
    return total


def propagator(
    sys: SpinSystem,
    pulse: PulseSequence,
    r: float = 1.0,
    etas: NDArray | None = None,
) -> Operator:
    """Full-sequence propagator for one ensemble member."""
    return total_propagator(segment_propagators(sys, pulse, r, etas))


def evolve_state(rho0: NDArray, U: NDArray) -> Operator:
    """ρ' = U ρ₀ U†."""
    rho0 = np.asarray(rho0)
    U = np.asarray(U)
    if rho0.shape != U.shape or rho0.ndim != 2:
        raise OperatorError(f"State shape {rho0.shape} does not match propagator shape {U.shape}")
    return U @ rho0 @ U.conj().T

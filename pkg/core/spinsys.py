"""
core/spinsys.py
~~~~~~~~~~~~~~~
Spin operators and Hamiltonians for an n-spin, single-species system in the
rotating frame under the weak-coupling approximation.

Conventions:
- spin 1 is the leftmost tensor factor
- |0> is the +z eigenstate, I_z |0> = +1/2 |0>
- offsets are stored in rad/s, couplings in Hz (2π applied in the coupling term)
- the coupling sum runs over unordered pairs k < l

Every returned operator is a read-only complex ndarray, so cached instances can
be shared freely between threads.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from core.errors import OperatorError, SpinSystemError

logger = logging.getLogger("sagrape.spinsys")

Operator = NDArray[np.complex128]
Axis = Literal["x", "y", "z"]

MAX_SPINS = 6
SYMMETRY_ATOL = 1e-12

# ──────────────────────────────────────────────
#  Single-spin building blocks
# ──────────────────────────────────────────────

_PAULI: dict[str, NDArray[np.complex128]] = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_IDENTITY_2 = np.eye(2, dtype=complex)


def _read_only(op: NDArray) -> NDArray:
    op.setflags(write=False)
    return op


def _check_spin_count(n: int) -> None:
    if not 1 <= n <= MAX_SPINS:
        raise OperatorError(f"Spin count must be between 1-{MAX_SPINS}, got: {n}")


# ──────────────────────────────────────────────
#  Operators
# ──────────────────────────────────────────────

@lru_cache(maxsize=None)
def spin_operator(n: int, k: int, axis: Axis) -> Operator:
    """
    Component ``axis`` of the k-th spin operator, I_kα = 1⊗…⊗(σ_α/2)⊗…⊗1.

    Args:
        n: spin count
        k: 1-based spin index
        axis: "x", "y" or "z"
    """
    _check_spin_count(n)
    if not 1 <= k <= n:
        raise OperatorError(f"Spin index must be between 1-{n}, got: {k}")
    if axis not in _PAULI:
        raise OperatorError(f"Axis must be one of x/y/z, got: {axis!r}")

    op = np.ones((1, 1), dtype=complex)
    for slot in range(1, n + 1):
        op = np.kron(op, _PAULI[axis] / 2 if slot == k else _IDENTITY_2)
    return _read_only(op)


@lru_cache(maxsize=None)
def _collective(n: int, axis: Axis) -> Operator:
    total = sum((spin_operator(n, k, axis) for k in range(1, n + 1)), start=np.zeros((2**n, 2**n), dtype=complex))
    return _read_only(total)


def collective_control(n: int, axis: Axis) -> Operator:
    """RF control generator H_α = Σ_k I_kα for α in {x, y}."""
    if axis not in ("x", "y"):
        raise OperatorError(f"Control axis must be x or y, got: {axis!r}")
    return _collective(n, axis)


def dephasing_generator(n: int) -> Operator:
    """H_z = Σ_k I_kz, the generator of a global dephasing field."""
    _check_spin_count(n)
    return _collective(n, "z")


def spin_dot(n: int, k: int, l: int) -> Operator:
    """Scalar product I_k·I_l."""
    return _read_only(
        sum(
            (spin_operator(n, k, a) @ spin_operator(n, l, a) for a in ("x", "y", "z")),
            start=np.zeros((2**n, 2**n), dtype=complex),
        )
    )


def is_hermitian(op: NDArray, atol: float = SYMMETRY_ATOL) -> bool:
    """Elementwise Hermiticity check, tolerance scaled to the operator magnitude."""
    if op.ndim < 2 or op.shape[-1] != op.shape[-2]:
        return False
    scale = max(1.0, float(np.max(np.abs(op), initial=0.0)))
    return bool(np.allclose(op, np.swapaxes(op, -1, -2).conj(), rtol=0.0, atol=atol * scale))


# ──────────────────────────────────────────────
#  Spin system
# ──────────────────────────────────────────────

def coupling_matrix(n: int, couplings: Sequence[float] | Sequence[Sequence[float]]) -> tuple[tuple[float, ...], ...]:
    """
    Normalize couplings to a full symmetric n×n matrix.

    Accepts either the upper triangle as a flat list, ordered
    (1,2), (1,3), …, (1,n), (2,3), …, or a full matrix.
    """
    values = list(couplings)
    n_pairs = n * (n - 1) // 2

    if all(isinstance(v, (int, float)) for v in values):
        if len(values) != n_pairs:
            raise SpinSystemError(
                f"Upper-triangle couplings need {n_pairs} entries for n={n}, got: {len(values)}"
            )
        full = np.zeros((n, n))
        iu = np.triu_indices(n, k=1)
        full[iu] = values
        full = full + full.T
    else:
        full = np.asarray(values, dtype=float)
        if full.shape != (n, n):
            raise SpinSystemError(f"Coupling matrix must be {n}x{n}, got shape {full.shape}")
    matrix = tuple(tuple(float(x) for x in row) for row in full)
    _check_couplings(matrix)
    return matrix


def _check_couplings(matrix: tuple[tuple[float, ...], ...]) -> None:
    n = len(matrix)
    for k in range(n):
        if matrix[k][k] != 0.0:
            raise SpinSystemError(f"Coupling diagonal must be zero, J[{k + 1}][{k + 1}] = {matrix[k][k]}")
        for l in range(k + 1, n):
            if matrix[k][l] != matrix[l][k]:
                raise SpinSystemError(f"Couplings must be symmetric, J[{k + 1}][{l + 1}] != J[{l + 1}][{k + 1}]")


@dataclass(frozen=True)
class SpinSystem:
    """
    Resonance offsets Ω_k (rad/s) and scalar couplings J_kl (Hz).

    Hashable and immutable; derived Hamiltonians are cached on first use.
    """

    offsets: tuple[float, ...]
    couplings: tuple[tuple[float, ...], ...]
    label: str = ""

    def __post_init__(self) -> None:
        n = len(self.offsets)
        if not 1 <= n <= MAX_SPINS:
            raise SpinSystemError(f"Spin count must be between 1-{MAX_SPINS}, got: {n}")
        if len(self.couplings) != n or any(len(row) != n for row in self.couplings):
            raise SpinSystemError(f"Couplings must be a {n}x{n} matrix")
        _check_couplings(self.couplings)
        if not all(math.isfinite(x) for x in self.offsets):
            raise SpinSystemError("Offsets must be finite")

    @classmethod
    def from_hz(
        cls,
        offsets_hz: Sequence[float],
        couplings_hz: Sequence[float] | Sequence[Sequence[float]] = (),
        label: str = "",
    ) -> "SpinSystem":
        """Build from offsets in Hz (converted to rad/s) and couplings in Hz."""
        n = len(offsets_hz)
        if n == 0:
            raise SpinSystemError("At least one spin is required")
        offsets = tuple(2 * math.pi * float(v) for v in offsets_hz)
        return cls(offsets=offsets, couplings=coupling_matrix(n, couplings_hz), label=label)

    @property
    def n(self) -> int:
        return len(self.offsets)

    @property
    def dim(self) -> int:
        return 2**self.n

    @cached_property
    def drift(self) -> Operator:
        return drift_hamiltonian(self)

    @cached_property
    def controls(self) -> tuple[Operator, Operator]:
        return collective_control(self.n, "x"), collective_control(self.n, "y")

    @cached_property
    def dephasing(self) -> Operator:
        return dephasing_generator(self.n)


def drift_hamiltonian(sys: SpinSystem) -> Operator:
    """H_0 = −Σ_k Ω_k I_kz + 2π Σ_{k<l} J_kl I_kz I_lz (diagonal)."""
    n = sys.n
    h0 = np.zeros((sys.dim, sys.dim), dtype=complex)
    for k in range(n):
        h0 -= sys.offsets[k] * spin_operator(n, k + 1, "z")
        for l in range(k + 1, n):
            j_kl = sys.couplings[k][l]
            if j_kl:
                h0 += 2 * math.pi * j_kl * (spin_operator(n, k + 1, "z") @ spin_operator(n, l + 1, "z"))
    return _read_only(h0)

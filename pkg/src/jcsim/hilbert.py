"""Truncated Fock-qubit Hilbert space and its elementary sparse operators.

The cavity mode keeps Fock levels 0..n_max (dimension n_max + 1) and is
tensored with a two-level qubit.  Basis ordering is fock-major and fixed:

    index = 2 * fock + qubit,    qubit 0 = lower |->,  qubit 1 = upper |+>

so the full dimension is 2 * (n_max + 1).  The creation operator
annihilates the edge state |n_max> (hard cutoff); truncation adequacy is
the solver's job, not this module's.

All builders return CSR matrices in a canonical form (sorted indices, no
stored entries below 1e-15 in magnitude), so identical inputs yield
bit-identical representations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import TruncationError

PRUNE_TOL = 1e-15


@dataclass(frozen=True)
class ModeSpace:
    """Truncated cavity (n_max + 1 levels) tensored with one qubit."""

    n_max: int

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")

    @property
    def cavity_dim(self) -> int:
        return self.n_max + 1

    @property
    def qubit_dim(self) -> int:
        return 2

    @property
    def total_dim(self) -> int:
        return 2 * (self.n_max + 1)

    def index(self, fock: int, qubit: int) -> int:
        """Basis index of |fock, qubit>; qubit 0 is the lower state."""
        if not 0 <= fock <= self.n_max:
            raise ValueError(f"fock index {fock} outside 0..{self.n_max}")
        if qubit not in (0, 1):
            raise ValueError(f"qubit index must be 0 or 1, got {qubit}")
        return 2 * fock + qubit


def as_clean_csr(matrix) -> sp.csr_matrix:
    """Canonical CSR: duplicates summed, tiny entries dropped, indices sorted."""
    m = sp.csr_matrix(matrix, dtype=complex)
    m.sum_duplicates()
    small = np.abs(m.data) < PRUNE_TOL
    if small.any():
        m.data[small] = 0.0
        m.eliminate_zeros()
    m.sort_indices()
    return m


def identity(dim: int) -> sp.csr_matrix:
    return as_clean_csr(sp.identity(dim, dtype=complex, format="csr"))


def kron(a, b) -> sp.csr_matrix:
    """Kronecker product in canonical CSR form."""
    return as_clean_csr(sp.kron(sp.csr_matrix(a, dtype=complex),
                                sp.csr_matrix(b, dtype=complex)))


def annihilation(space: ModeSpace) -> sp.csr_matrix:
    """Cavity lowering operator a (identity on the qubit factor)."""
    amps = np.sqrt(np.arange(1, space.cavity_dim, dtype=float))
    a_cav = sp.diags(amps.astype(complex), offsets=1, format="csr")
    return kron(a_cav, identity(2))


def sigma_minus(space: ModeSpace) -> sp.csr_matrix:
    """Qubit lowering operator |-><+| (identity on the cavity factor)."""
    sm = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))
    return kron(identity(space.cavity_dim), sm)


def coherent_vector(alpha: complex, space: ModeSpace) -> np.ndarray:
    """Coherent-state amplitudes on the cavity factor, length n_max + 1.

    Entries are exp(-|alpha|^2 / 2) alpha^n / sqrt(n!), generated by the
    recurrence c_{n+1} = c_n alpha / sqrt(n + 1); no factorials are formed,
    so the construction stays stable past n ~ 170.  The truncated vector is
    faithful (norm within 1e-8 of one) only while |alpha|^2 <= n_max / 2;
    larger amplitudes raise TruncationError.
    """
    alpha = complex(alpha)
    nbar = abs(alpha) ** 2
    if nbar > 0.5 * space.n_max:
        raise TruncationError(
            f"|alpha|^2 = {nbar:.3f} exceeds n_max/2 = {0.5 * space.n_max:.3f}; "
            f"increase n_max")
    c = np.empty(space.cavity_dim, dtype=complex)
    c[0] = math.exp(-0.5 * nbar)
    for n in range(1, space.cavity_dim):
        c[n] = c[n - 1] * alpha / math.sqrt(n)
    return c

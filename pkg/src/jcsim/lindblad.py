"""Hamiltonian and Liouvillian of the driven, damped qubit-cavity system.

Everything lives in the frame rotating at the drive frequency, so only
detunings enter:

    dwc = drive minus cavity,  dwq = drive minus qubit = dwc - delta,
    delta = qubit minus cavity.

The generator acting on the density matrix is

    drho/dt = -i [H, rho]
              + kappa  (2 a rho a+  - a+ a rho  - rho a+ a)
              + gamma/2 (2 s- rho s+ - s+ s- rho - rho s+ s-)

    H = -dwc a+ a - dwq s+ s- + eps_d (a + a+) + g (a s+ + a+ s-)

with kappa the cavity field half-width (cavity energy decays at 2 kappa)
and the drive amplitude eps_d taken real and nonnegative; a drive phase
only rotates the phase-space picture.

Superoperators use column-stacking vectorization, vec(A rho B) =
(B^T kron A) vec(rho), which fixes reproducible sparse indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch
from .hilbert import ModeSpace, annihilation, as_clean_csr, identity, kron, sigma_minus


@dataclass(frozen=True)
class SystemParams:
    """Physical rates and detunings, all in units of the cavity half-width.

    kappa is stored explicitly (default 1) so parameter sets quoted in
    other rate units can be entered without conversion mistakes.
    """

    g: float
    gamma: float
    eps_d: float
    dwc: float = 0.0
    delta: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in
                   (self.g, self.gamma, self.eps_d, self.dwc, self.delta, self.kappa)):
            raise ValueError("all system parameters must be finite")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.g < 0:
            raise ValueError(f"g must be nonnegative, got {self.g}")
        if self.eps_d < 0:
            raise ValueError(f"eps_d must be nonnegative, got {self.eps_d}")

    @property
    def dwq(self) -> float:
        """Drive-qubit detuning, derived: dwq = dwc - delta."""
        return self.dwc - self.delta


@dataclass(frozen=True)
class Superoperator:
    """Sparse generator acting on column-stacked density matrices."""

    matrix: sp.csr_matrix

    @property
    def dim(self) -> int:
        """Length of the vectorized state the generator acts on."""
        return self.matrix.shape[0]

    @property
    def total_dim(self) -> int:
        """Hilbert-space dimension, sqrt of the vectorized length."""
        return int(round(math.sqrt(self.dim)))


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(matrix, dtype=complex).reshape(-1, order="F")


def unvec(vector: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Inverse of vec; dim defaults to sqrt(len)."""
    v = np.asarray(vector, dtype=complex)
    if dim is None:
        dim = int(round(math.sqrt(v.size)))
    if dim * dim != v.size:
        raise DimensionMismatch(f"vector of length {v.size} is not a {dim}x{dim} matrix")
    return v.reshape((dim, dim), order="F")


def hamiltonian(p: SystemParams, space: ModeSpace) -> sp.csr_matrix:
    """Rotating-frame Hamiltonian; Hermitian by construction."""
    a = annihilation(space)
    sm = sigma_minus(space)
    ad = as_clean_csr(a.conj().T)
    sp_ = as_clean_csr(sm.conj().T)
    h = (-p.dwc) * (ad @ a) + (-p.dwq) * (sp_ @ sm) \
        + p.eps_d * (a + ad) + p.g * (a @ sp_ + ad @ sm)
    return as_clean_csr(h)


def _dissipator(c: sp.csr_matrix, dim: int) -> sp.csr_matrix:
    """Vectorized 2 c rho c+ - c+c rho - rho c+c for jump operator c."""
    cdc = as_clean_csr(c.conj().T @ c)
    eye = identity(dim)
    return as_clean_csr(2.0 * kron(c.conj(), c)
                        - kron(eye, cdc) - kron(cdc.T, eye))


def liouvillian(p: SystemParams, space: ModeSpace) -> Superoperator:
    """Full generator: coherent part plus cavity and qubit dissipators."""
    h = hamiltonian(p, space)
    d = space.total_dim
    eye = identity(d)
    lmat = -1j * (kron(eye, h) - kron(h.T, eye))
    lmat = lmat + p.kappa * _dissipator(annihilation(space), d)
    if p.gamma > 0:
        lmat = lmat + 0.5 * p.gamma * _dissipator(sigma_minus(space), d)
    return Superoperator(as_clean_csr(lmat))


def apply(L: Superoperator, rho) -> np.ndarray:
    """Return d(rho)/dt as a matrix; rho may be a DensityMatrix or an array."""
    mat = np.asarray(getattr(rho, "matrix", rho), dtype=complex)
    d = L.total_dim
    if mat.shape != (d, d):
        raise DimensionMismatch(
            f"state is {mat.shape}, generator acts on {d}x{d} matrices")
    return unvec(L.matrix @ vec(mat), d)

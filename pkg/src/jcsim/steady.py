"""Steady-state solvers for the vectorized generator, plus truncation control.

Three interchangeable methods solve L rho = 0 with tr rho = 1:

* ``steady_state_direct``     sparse LU on the trace-constrained system
                              (the workhorse, scales to ~10^5 unknowns);
* ``steady_state_evolve``     adaptive explicit integration to long times
                              (oracle; impractically stiff for large spaces);
* ``steady_state_dense_null`` dense SVD null-space extraction (small
                              instances only).

The trace constraint replaces the first row of L, which is admissible
because the rows of any trace-preserving generator satisfy exactly one
linear dependency supported on the diagonal positions.  Residuals are
always reported against the unmodified L.

``converge_truncation`` grows the Fock cutoff geometrically until the
photon number stabilizes and the population near the truncation edge is
negligible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import splu

from .errors import (
    DegenerateNullSpace,
    DimensionTooLarge,
    NotConverged,
    ResidualTooLarge,
    SingularSystem,
    TruncationCapExceeded,
)
from .hilbert import ModeSpace
from .lindblad import Superoperator, SystemParams, liouvillian, unvec, vec

TAIL_FRACTION = 0.9
TAIL_LIMIT = 1e-7


@dataclass(frozen=True)
class DensityMatrix:
    """Dense Hermitian, unit-trace, positive (to numerical noise) state."""

    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_solution(cls, raw: np.ndarray) -> "DensityMatrix":
        """Symmetrize and renormalize a raw solver output, then validate."""
        m = np.asarray(raw, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        tr = np.trace(m).real
        if abs(tr) < 1e-12:
            raise DegenerateNullSpace("solver returned a traceless matrix")
        state = cls(m / tr)
        state.validate()
        return state

    def validate(self, herm_tol=1e-10, trace_tol=1e-10, eig_floor=-1e-8):
        h = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if h > herm_tol:
            raise ValueError(f"not Hermitian: max asymmetry {h:.2e}")
        t = abs(np.trace(self.matrix) - 1.0)
        if t > trace_tol:
            raise ValueError(f"trace deviates from 1 by {t:.2e}")
        lam = np.linalg.eigvalsh(self.matrix)
        if lam[0] < eig_floor:
            raise ValueError(f"negative eigenvalue {lam[0]:.2e}")

    def cavity_populations(self) -> np.ndarray:
        """Fock populations p(n), qubit traced out (fock-major ordering)."""
        d = np.diag(self.matrix).real
        return d[0::2] + d[1::2]

    def photon_number(self) -> float:
        p = self.cavity_populations()
        return float(np.dot(np.arange(p.size), p))


@dataclass(frozen=True)
class SolveReport:
    """Diagnostics for one steady-state solve.

    ``iterations`` counts refinement rounds (direct), right-hand-side
    evaluations (evolve), or truncation rounds (converge_truncation).
    """

    method: str
    residual_norm: float
    n_max_used: int
    wall_time: float
    iterations: int


@dataclass(frozen=True)
class ConvergencePolicy:
    n_max_start: int = 24
    n_max_cap: int = 512
    rel_tol: float = 1e-3
    tol: float = 1e-8


def ground_state(space: ModeSpace) -> DensityMatrix:
    """|0,-><0,-| : cavity vacuum, qubit in the lower state."""
    m = np.zeros((space.total_dim, space.total_dim), dtype=complex)
    m[0, 0] = 1.0
    return DensityMatrix(m)


def _residual(L: Superoperator, state: DensityMatrix) -> float:
    return float(np.linalg.norm(L.matrix @ vec(state.matrix)))


def steady_state_direct(L: Superoperator, tol: float = 1e-10):
    """Sparse LU solve of the trace-constrained system.

    The replaced row is scaled to the mean magnitude of the stored
    entries of L to keep the factorization well conditioned, and the
    solution is polished by iterative refinement before the residual is
    checked against the unmodified generator.
    """
    t0 = time.perf_counter()
    lmat = L.matrix
    d = L.total_dim
    n2 = L.dim
    weight = float(np.mean(np.abs(lmat.data))) if lmat.nnz else 1.0
    diag_idx = np.arange(d) * (d + 1)
    trace_row = sp.csr_matrix(
        (np.full(d, weight, dtype=complex), (np.zeros(d, dtype=int), diag_idx)),
        shape=(1, n2))
    m = sp.vstack([trace_row, lmat[1:]], format="csc")
    b = np.zeros(n2, dtype=complex)
    b[0] = weight

    try:
        lu = splu(m, permc_spec="COLAMD")
    except (RuntimeError, ValueError) as exc:
        raise SingularSystem(f"sparse factorization failed: {exc}") from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("factorization produced non-finite solution")

    iterations = 1
    for _ in range(4):
        r = b - m @ x
        if np.linalg.norm(r) <= 1e-13 * weight:
            break
        x = x + lu.solve(r)
        iterations += 1

    state = DensityMatrix.from_solution(unvec(x, d))
    res = _residual(L, state)
    if res > tol:
        raise ResidualTooLarge(f"residual {res:.3e} exceeds tolerance {tol:.3e}")
    report = SolveReport("direct", res, d // 2 - 1, time.perf_counter() - t0, iterations)
    return state, report


def propagate(L: Superoperator, rho0: DensityMatrix, t: float,
              rtol: float = 1e-10, atol: float = 1e-12) -> DensityMatrix:
    """Integrate drho/dt = L rho for a fixed time t (no steady-state claim)."""
    lmat = L.matrix
    sol = solve_ivp(lambda _t, y: lmat @ y, (0.0, t), vec(rho0.matrix),
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise NotConverged(f"integration failed: {sol.message}")
    return DensityMatrix.from_solution(unvec(sol.y[:, -1], L.total_dim))


def steady_state_evolve(L: Superoperator, rho0: DensityMatrix, t_max: float,
                        tol: float = 1e-8, rtol: float = 1e-10, atol: float = 1e-12):
    """Integrate to long times until the residual drops below tol.

    Integration proceeds in growing windows with a residual check after
    each; the trace must drift by no more than 1e-9 over the whole run.
    """
    t0 = time.perf_counter()
    lmat = L.matrix
    d = L.total_dim
    y = vec(rho0.matrix)
    nfev = 0
    t = 0.0
    res = float(np.linalg.norm(lmat @ y))
    window = 1.0
    while res >= tol and t < t_max:
        t_next = min(t + window, t_max)
        sol = solve_ivp(lambda _t, v: lmat @ v, (t, t_next), y,
                        method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise NotConverged(f"integration failed at t = {t:.3g}: {sol.message}")
        y = sol.y[:, -1]
        t = sol.t[-1]
        nfev += sol.nfev
        res = float(np.linalg.norm(lmat @ y))
        window *= 2.0
    if res >= tol:
        raise NotConverged(
            f"residual {res:.3e} still above {tol:.3e} at t_max = {t_max:g}")
    drift = abs(np.trace(unvec(y, d)) - 1.0)
    if drift > 1e-9:
        raise NotConverged(f"trace drifted by {drift:.2e} during integration")
    state = DensityMatrix.from_solution(unvec(y, d))
    res = _residual(L, state)
    report = SolveReport("evolve", res, d // 2 - 1, time.perf_counter() - t0, nfev)
    return state, report


def steady_state_dense_null(L: Superoperator):
    """Dense null-space extraction via SVD; small instances only."""
    t0 = time.perf_counter()
    if L.dim > 1024:
        raise DimensionTooLarge(
            f"vectorized dimension {L.dim} exceeds the dense guard (1024)")
    a = L.matrix.toarray()
    svals = np.linalg.svd(a, compute_uv=False)
    if svals[-2] - svals[-1] < 1e-10:
        raise DegenerateNullSpace(
            f"two smallest singular values {svals[-2]:.3e}, {svals[-1]:.3e} coincide")
    _, _, vh = np.linalg.svd(a)
    state = DensityMatrix.from_solution(unvec(vh[-1].conj(), L.total_dim))
    res = _residual(L, state)
    report = SolveReport("dense_null", res, L.total_dim // 2 - 1,
                         time.perf_counter() - t0, 1)
    return state, report


def converge_truncation(p: SystemParams, policy: ConvergencePolicy = ConvergencePolicy()):
    """Grow n_max by factors of 1.3 until the photon number stabilizes.

    Convergence requires both a relative photon-number change below
    policy.rel_tol between consecutive truncations and a population above
    0.9 n_max below 1e-7 in the accepted solution.
    """
    t0 = time.perf_counter()
    nbar_history = []
    prev_nbar = None
    n_max = policy.n_max_start
    rounds = 0
    while n_max <= policy.n_max_cap:
        L = liouvillian(p, ModeSpace(n_max))
        state, report = steady_state_direct(L, tol=policy.tol)
        rounds += 1
        nbar = state.photon_number()
        nbar_history.append(nbar)
        pops = state.cavity_populations()
        tail = float(pops[np.arange(pops.size) > TAIL_FRACTION * n_max].sum())
        if prev_nbar is not None:
            dn = abs(nbar - prev_nbar)
            rel = 0.0 if dn == 0.0 else dn / max(nbar, 1e-300)
            if rel < policy.rel_tol and tail < TAIL_LIMIT:
                total = time.perf_counter() - t0
                return state, replace(report, wall_time=total, iterations=rounds)
        prev_nbar = nbar
        n_max = math.ceil(1.3 * n_max)
    raise TruncationCapExceeded(
        f"no convergence up to n_max = {policy.n_max_cap}; "
        f"<n> sequence {[f'{v:.6g}' for v in nbar_history]}",
        nbar_history)


def write_state_csv(path, state: DensityMatrix, params: SystemParams | None = None,
                    report: SolveReport | None = None):
    """Dump rho as rows i,j,re,im plus a JSON sidecar with run metadata."""
    import json
    from dataclasses import asdict
    from pathlib import Path

    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("i,j,re,im\n")
        m = state.matrix
        for i in range(state.dim):
            for j in range(state.dim):
                fh.write(f"{i},{j},{m[i, j].real:.17g},{m[i, j].imag:.17g}\n")
    sidecar = {"shape": [state.dim, state.dim]}
    if params is not None:
        sidecar["params"] = asdict(params)
        sidecar["params"]["dwq"] = params.dwq
    if report is not None:
        sidecar["solver"] = asdict(report)
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")

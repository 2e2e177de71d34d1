"""Cavity observables: reductions, expectation values, Q function, peaks.

Convention used throughout: a ``DensityMatrix`` is a state of the full
cavity-qubit space (fock-major ordering); a bare ndarray is a cavity-only
matrix.  The Q function of a state rho is (1/pi) <alpha|rho|alpha> sampled
over a rectangular window of the complex plane alpha = x + i y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, GridTooCoarse, TruncationError
from .hilbert import ModeSpace
from .steady import DensityMatrix


@dataclass(frozen=True)
class GridSpec:
    """Rectangular phase-space window with sample counts."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int = 201
    ny: int = 201

    def __post_init__(self):
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("window bounds must be increasing")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("need at least 2 samples per axis")

    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def ys(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    def corners(self) -> list[complex]:
        return [complex(x, y) for x in (self.x_min, self.x_max)
                for y in (self.y_min, self.y_max)]


@dataclass(frozen=True)
class QGrid:
    """Sampled Q function; values[j][i] corresponds to (xs[i], ys[j])."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int
    values: np.ndarray

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.x_min, self.x_max, self.y_min, self.y_max, self.nx, self.ny)

    def xs(self) -> np.ndarray:
        return self.spec.xs()

    def ys(self) -> np.ndarray:
        return self.spec.ys()

    def riemann_mass(self) -> float:
        return float(self.values.sum() * self.spec.dx * self.spec.dy)


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @property
    def length(self) -> float:
        return math.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2)


@dataclass(frozen=True)
class Peak:
    """One local maximum of a Q grid, quadratically refined."""

    x: float
    y: float
    height: float
    weight: float

    @property
    def radius2(self) -> float:
        return self.x ** 2 + self.y ** 2


def _as_full_matrix(rho) -> np.ndarray:
    return np.asarray(getattr(rho, "matrix", rho), dtype=complex)


def reduce_cavity(rho, space: ModeSpace) -> np.ndarray:
    """Trace out the qubit: rho_cv[m, n] = sum_q rho[2m+q, 2n+q]."""
    m = _as_full_matrix(rho)
    if m.shape != (space.total_dim, space.total_dim):
        raise DimensionMismatch(
            f"state is {m.shape}, space dimension is {space.total_dim}")
    return m[0::2, 0::2] + m[1::2, 1::2]


def expect_photon(rho) -> float:
    """<a+ a>; accepts a full-space DensityMatrix or a cavity matrix."""
    if isinstance(rho, DensityMatrix):
        pops = rho.cavity_populations()
    else:
        pops = np.diag(np.asarray(rho, dtype=complex)).real
    return float(np.dot(np.arange(pops.size), pops))


def qubit_moments(rho: DensityMatrix):
    """Qubit coherence <s-> and Bloch vector (X, Y, Z) of a full-space state.

    With the lower state at qubit index 0, <s-> = rho_q[1, 0] and the
    identity |<s->| = sqrt(X^2 + Y^2) / 2 holds exactly.
    """
    m = _as_full_matrix(rho)
    r10 = np.trace(m[1::2, 0::2])
    r00 = np.trace(m[0::2, 0::2]).real
    r11 = np.trace(m[1::2, 1::2]).real
    bloch = BlochVector(x=float(2.0 * r10.real), y=float(-2.0 * r10.imag),
                        z=float(r11 - r00))
    return complex(r10), bloch


def _coherent_columns(alphas: np.ndarray, dim: int) -> np.ndarray:
    """Coherent amplitudes for many alphas at once, shape (dim, len(alphas))."""
    v = np.empty((dim, alphas.size), dtype=complex)
    v[0] = np.exp(-0.5 * np.abs(alphas) ** 2)
    for n in range(1, dim):
        v[n] = v[n - 1] * alphas / math.sqrt(n)
    return v


def q_function(rho_cav: np.ndarray, grid: GridSpec) -> QGrid:
    """Sample (1/pi) <alpha|rho|alpha> over the window.

    The window corners must satisfy the coherent-state faithfulness bound
    |alpha|^2 <= n_max / 2 for the cavity matrix's dimension, otherwise
    TruncationError is raised; zero-pad the matrix (pad_cavity) to widen
    the admissible window.  Trailing all-zero rows are skipped in the
    contraction, so padding costs nothing.
    """
    m = np.asarray(rho_cav, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"cavity matrix expected, got shape {m.shape}")
    n_max = m.shape[0] - 1
    worst = max(abs(c) ** 2 for c in grid.corners())
    if worst > 0.5 * n_max:
        raise TruncationError(
            f"window corner |alpha|^2 = {worst:.3f} exceeds n_max/2 = {0.5 * n_max:.3f}; "
            f"pad the cavity matrix or shrink the window")

    nz = np.nonzero(np.abs(m) > 0.0)
    k = int(max(nz[0].max(), nz[1].max())) + 1 if nz[0].size else 1
    core = np.ascontiguousarray(m[:k, :k])
    xs = grid.xs()
    values = np.empty((grid.ny, grid.nx), dtype=float)
    for j, y in enumerate(grid.ys()):
        v = _coherent_columns(xs + 1j * y, k)
        values[j] = np.einsum("np,np->p", v.conj(), core @ v).real / math.pi
    return QGrid(grid.x_min, grid.x_max, grid.y_min, grid.y_max,
                 grid.nx, grid.ny, values)


def default_grid(n_expect: float, points: int = 201) -> GridSpec:
    """Centered square window of half-width sqrt(<n>) + 5.

    Covers the Gaussian tails of the brightest coherent lobe at three-plus
    standard deviations.
    """
    half = math.sqrt(max(n_expect, 0.0)) + 5.0
    return GridSpec(-half, half, -half, half, points, points)


def pad_cavity(rho_cav: np.ndarray, n_max: int) -> np.ndarray:
    """Zero-pad a cavity matrix to dimension n_max + 1 (exact operation)."""
    m = np.asarray(rho_cav, dtype=complex)
    dim = n_max + 1
    if dim < m.shape[0]:
        raise DimensionMismatch(
            f"target n_max {n_max} smaller than current {m.shape[0] - 1}")
    out = np.zeros((dim, dim), dtype=complex)
    out[:m.shape[0], :m.shape[0]] = m
    return out


def grid_for_state(rho_cav: np.ndarray, points: int = 201):
    """Default window for a cavity state plus the matrix padded to admit it."""
    spec = default_grid(expect_photon(rho_cav), points)
    need = math.ceil(2.0 * max(abs(c) ** 2 for c in spec.corners()))
    padded = pad_cavity(rho_cav, max(need, rho_cav.shape[0] - 1))
    return spec, padded


def _refine_quadratic(block: np.ndarray):
    """Stationary point of the least-squares quadratic on a 3x3 block.

    Returns (du, dv, height) in cell units relative to the block center.
    Raises GridTooCoarse when the fitted Hessian is not negative definite.
    """
    u, w = np.meshgrid((-1.0, 0.0, 1.0), (-1.0, 0.0, 1.0), indexing="xy")
    u = u.ravel()
    w = w.ravel()
    design = np.column_stack([np.ones(9), u, w, u * u, u * w, w * w])
    coef, *_ = np.linalg.lstsq(design, block.ravel(), rcond=None)
    a0, b, c, d, e, f = coef
    det = 4.0 * d * f - e * e
    if not (d < 0 and det > 0):
        raise GridTooCoarse(
            f"quadratic fit is not concave at a peak (d={d:.3g}, det={det:.3g})")
    du = (-2.0 * f * b + e * c) / det
    dv = (-2.0 * d * c + e * b) / det
    du = float(np.clip(du, -1.0, 1.0))
    dv = float(np.clip(dv, -1.0, 1.0))
    height = a0 + b * du + c * dv + d * du * du + e * du * dv + f * dv * dv
    return du, dv, float(height)


def find_peaks(q: QGrid, rel_threshold: float = 0.01) -> list[Peak]:
    """Strict 8-neighborhood local maxima above rel_threshold * max(Q).

    Locations are refined by a local quadratic fit and each grid point's
    mass is assigned to the nearest peak to estimate relative weights.
    Peaks are returned sorted by height, highest first.
    """
    if not 0.0 < rel_threshold < 1.0:
        raise ValueError(f"rel_threshold must be in (0, 1), got {rel_threshold}")
    v = q.values
    vmax = float(v.max())
    if vmax <= 0.0:
        return []
    floor = rel_threshold * vmax
    inner = v[1:-1, 1:-1]
    strict = np.ones_like(inner, dtype=bool)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj == 0 and di == 0:
                continue
            strict &= inner > v[1 + dj:v.shape[0] - 1 + dj, 1 + di:v.shape[1] - 1 + di]
    strict &= inner >= floor
    js, is_ = np.nonzero(strict)

    xs = q.xs()
    ys = q.ys()
    dx = q.spec.dx
    dy = q.spec.dy
    raw = []
    for j, i in zip(js + 1, is_ + 1):
        du, dv, height = _refine_quadratic(v[j - 1:j + 2, i - 1:i + 2])
        raw.append((float(xs[i] + du * dx), float(ys[j] + dv * dy), height))
    if not raw:
        return []

    px = np.array([r[0] for r in raw])
    py = np.array([r[1] for r in raw])
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    d2 = (gx[..., None] - px) ** 2 + (gy[..., None] - py) ** 2
    nearest = np.argmin(d2, axis=-1)
    cell = dx * dy
    weights = [float(v[nearest == k].sum() * cell) for k in range(len(raw))]

    peaks = [Peak(x, y, h, wt) for (x, y, h), wt in zip(raw, weights)]
    peaks.sort(key=lambda p: (-p.height, p.x, p.y))
    return peaks


def write_qgrid(path, q: QGrid, params: dict | None = None,
                peaks: list[Peak] | None = None):
    """CSV with header x,y,q in y-outer, x-inner order, plus a JSON sidecar."""
    path = Path(path)
    xs = q.xs()
    ys = q.ys()
    with open(path, "w", newline="") as fh:
        fh.write("x,y,q\n")
        for j, y in enumerate(ys):
            row = q.values[j]
            for i, x in enumerate(xs):
                fh.write(f"{x:.17g},{y:.17g},{row[i]:.17g}\n")
    sidecar = {
        "window": {"x_min": q.x_min, "x_max": q.x_max,
                   "y_min": q.y_min, "y_max": q.y_max,
                   "nx": q.nx, "ny": q.ny},
    }
    if params is not None:
        sidecar["params"] = params
    if peaks is not None:
        sidecar["peaks"] = [
            {"x": p.x, "y": p.y, "height": p.height, "weight": p.weight}
            for p in peaks
        ]
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")

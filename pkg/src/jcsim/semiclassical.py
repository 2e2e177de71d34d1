"""Mean-field treatments of the driven qubit-cavity system.

Factorizing field-qubit correlations in the first-moment equations of the
master equation closes them into

    dbeta/dt = -(kappa - i dwc) beta - i g s - i eps_d
    ds/dt    = -(gamma/2 - i dwq) s + i g beta w
    dw/dt    = -gamma (w + 1) + 2 i g (conj(beta) s - beta conj(s))

with beta = <a>, s = <s->, w = <sz>.  Their fixed points give the
classical bistability branches; with gamma = 0 the flow conserves the
qubit vector length |s|^2 + w^2/4, which is what separates the
neoclassical states from the damped-qubit branches.

Four families of steady-state equations are solved here, each tagged by
its source:

* ``maxwell_bloch``     exact fixed points of the system above (cubic in n);
* ``neoclassical``      n [kappa^2 + (dwc - g^2/sqrt(dwc^2 + 4 g^2 n))^2] = eps_d^2;
* ``kerr``              dispersive variant with effective nonlinearity g^2/delta;
* ``resonance`` /       on-resonance asymptotics n [kappa^2 + (g/(2 sqrt(n)))^2]
  ``split_lorentzian``  = eps_d^2 and its detuned split form.

Mirror partners that arise at dwc = 0 (two field states of equal photon
number and opposite phase quadrature) are tagged ``phase_bistable``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DeltaZero, SingularGammaTilde, StepSizeUnderflow
from .lindblad import SystemParams

_ROOT_MERGE_RTOL = 1e-7


@dataclass(frozen=True)
class MeanFieldState:
    """Factorized first moments: field beta, coherence s, inversion w."""

    beta: complex
    s: complex
    w: float

    def spin_length_sq(self) -> float:
        return abs(self.s) ** 2 + 0.25 * self.w ** 2


@dataclass
class SemiclassicalBranch:
    """One mean-field solution; n = |alpha|^2 by construction."""

    alpha: complex
    n: float
    s: complex | None
    w: float | None
    stability: str
    source: str


@dataclass(frozen=True)
class ScaleParams:
    """Photon-number scales whose divergence defines the classical limits."""

    n_sc: float
    n_mb: float
    n_nc_kerr: float


@dataclass(frozen=True)
class MBTrajectory:
    t: np.ndarray
    beta: np.ndarray
    s: np.ndarray
    w: np.ndarray
    final: MeanFieldState
    converged: bool
    rhs_norm: float
    spin_length_drift: float | None


def _gamma_tilde(p: SystemParams) -> complex:
    return p.gamma - 2j * p.dwq


def _kappa_tilde(p: SystemParams) -> complex:
    return p.kappa - 1j * p.dwc


def mb_rhs(state: MeanFieldState, p: SystemParams) -> MeanFieldState:
    """Time derivative of the factorized moments; dw/dt is exactly real."""
    dbeta = -(p.kappa - 1j * p.dwc) * state.beta - 1j * p.g * state.s - 1j * p.eps_d
    ds = -(0.5 * p.gamma - 1j * p.dwq) * state.s + 1j * p.g * state.beta * state.w
    dw = -p.gamma * (state.w + 1.0) - 4.0 * p.g * (state.beta.conjugate() * state.s).imag
    return MeanFieldState(dbeta, ds, dw)


def rhs_norm(state: MeanFieldState, p: SystemParams) -> float:
    d = mb_rhs(state, p)
    return math.sqrt(abs(d.beta) ** 2 + abs(d.s) ** 2 + d.w ** 2)


def _pack(state: MeanFieldState) -> np.ndarray:
    return np.array([state.beta.real, state.beta.imag,
                     state.s.real, state.s.imag, state.w])


def _unpack(y: np.ndarray) -> MeanFieldState:
    return MeanFieldState(complex(y[0], y[1]), complex(y[2], y[3]), float(y[4]))


def _rhs_real(y: np.ndarray, p: SystemParams) -> np.ndarray:
    d = mb_rhs(_unpack(y), p)
    return np.array([d.beta.real, d.beta.imag, d.s.real, d.s.imag, d.w])


def mb_integrate(state0: MeanFieldState, p: SystemParams, t_max: float,
                 tol: float = 1e-9, rtol: float = 1e-10, atol: float = 1e-12,
                 max_points: int = 2000) -> MBTrajectory:
    """Adaptive integration of the mean-field flow.

    Stops early once the right-hand side drops below tol; ``converged``
    records whether that happened within t_max.  When gamma = 0 the
    qubit-vector length must be conserved, and its drift over the run is
    reported for checking.
    """
    t_eval = np.linspace(0.0, t_max, max_points)
    sol = solve_ivp(lambda _t, y: _rhs_real(y, p), (0.0, t_max), _pack(state0),
                    method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval,
                    events=_make_settle_event(p, tol))
    if not sol.success:
        raise StepSizeUnderflow(f"mean-field integration failed: {sol.message}")
    if sol.t_events[0].size:
        y_end = sol.y_events[0][0]
    else:
        y_end = sol.y[:, -1]
    final = _unpack(y_end)
    res = rhs_norm(final, p)
    beta = sol.y[0] + 1j * sol.y[1]
    s = sol.y[2] + 1j * sol.y[3]
    w = sol.y[4]
    drift = None
    if p.gamma == 0.0:
        lengths = np.abs(s) ** 2 + 0.25 * w ** 2
        drift = float(np.max(np.abs(lengths - lengths[0]))) if lengths.size else 0.0
    return MBTrajectory(sol.t, beta, s, w, final, res < tol, res, drift)


def _make_settle_event(p: SystemParams, tol: float):
    def settled(_t, y):
        return np.linalg.norm(_rhs_real(y, p)) - tol
    settled.terminal = True
    settled.direction = -1
    return settled


def mb_steady_roots(p: SystemParams) -> list[SemiclassicalBranch]:
    """All physical fixed points of the factorized flow.

    Setting the three derivatives to zero and eliminating s and w gives
    w = -1/(1+u), s = 2 i g alpha w / gt and

        alpha = -i eps_d / (kt + 2 g^2 / (gt (1 + u))),
        kt = kappa - i dwc,  gt = gamma - 2 i dwq,
        u = n / n_mb,  n = |alpha|^2,  n_mb = |gt|^2 / (8 g^2).

    Taking |.|^2 of the alpha relation and clearing (1+u)^2 yields
    n |kt (1+u) + 2 g^2 / gt|^2 = eps_d^2 (1+u)^2; with m = n_mb, A = kt,
    B = 2 g^2 / gt and u = n/m this expands to the cubic

        |A|^2 n^3
      + [ m (2|A|^2 + 2 Re(A conj B)) - eps_d^2 ] n^2
      + [ m^2 (|A|^2 + 2 Re(A conj B) + |B|^2) - 2 eps_d^2 m ] n
      - eps_d^2 m^2 = 0,

    solved by the companion matrix and filtered to real nonnegative roots.
    Generic parameters give 1 or 3 branches (2 at a fold, where the cubic
    has a double root).
    """
    gt = _gamma_tilde(p)
    if abs(gt) == 0.0:
        raise SingularGammaTilde(
            "gamma = 0 and dwq = 0: the damped-qubit state equation is undefined; "
            "use the neoclassical or resonance branches")
    if p.g == 0.0:
        alpha = -1j * p.eps_d / _kappa_tilde(p)
        return [SemiclassicalBranch(alpha, abs(alpha) ** 2, 0.0 + 0.0j, -1.0,
                                    "unknown", "maxwell_bloch")]
    kt = _kappa_tilde(p)
    m = abs(gt) ** 2 / (8.0 * p.g ** 2)
    a2 = abs(kt) ** 2
    b = 2.0 * p.g ** 2 / gt
    re_ab = (kt * b.conjugate()).real
    coeffs = [
        a2,
        m * (2.0 * a2 + 2.0 * re_ab) - p.eps_d ** 2,
        m * m * (a2 + 2.0 * re_ab + abs(b) ** 2) - 2.0 * p.eps_d ** 2 * m,
        -(p.eps_d ** 2) * m * m,
    ]
    ns = []
    for r in np.roots(coeffs):
        scale = max(1.0, abs(r))
        if abs(r.imag) <= 1e-10 * scale and r.real >= -1e-12 * scale:
            ns.append(max(float(r.real), 0.0))
    ns.sort()
    merged: list[float] = []
    for n in ns:
        if merged and abs(n - merged[-1]) <= _ROOT_MERGE_RTOL * max(1.0, n):
            continue
        merged.append(n)

    branches = []
    for n in merged:
        u = n / m
        w = -1.0 / (1.0 + u)
        alpha = -1j * p.eps_d / (kt + 2.0 * p.g ** 2 / (gt * (1.0 + u)))
        s = 2j * p.g * alpha * w / gt
        branches.append(SemiclassicalBranch(alpha, abs(alpha) ** 2, s, w,
                                            "unknown", "maxwell_bloch"))
    return branches


def mb_jacobian(state: MeanFieldState, p: SystemParams) -> np.ndarray:
    """Jacobian of the flow in the real coordinates (Re b, Im b, Re s, Im s, w)."""
    g = p.g
    x1, x2 = state.beta.real, state.beta.imag
    x3, x4 = state.s.real, state.s.imag
    x5 = state.w
    return np.array([
        [-p.kappa, -p.dwc, 0.0, g, 0.0],
        [p.dwc, -p.kappa, -g, 0.0, 0.0],
        [0.0, -g * x5, -0.5 * p.gamma, -p.dwq, -g * x2],
        [g * x5, 0.0, p.dwq, -0.5 * p.gamma, g * x1],
        [-4.0 * g * x4, 4.0 * g * x3, 4.0 * g * x2, -4.0 * g * x1, -p.gamma],
    ])


def mb_stability(branch: SemiclassicalBranch, p: SystemParams):
    """Classify a fixed point by the Jacobian spectrum.

    Returns (tag, eigenvalues): ``stable`` when every real part is below
    -1e-9, ``marginal`` when the leading real part sits within 1e-9 of
    zero, ``unstable`` otherwise.
    """
    if branch.s is None or branch.w is None:
        raise ValueError("branch carries no qubit moments; "
                         "stability is defined for damped-qubit fixed points")
    state = MeanFieldState(branch.alpha, branch.s, branch.w)
    eig = np.linalg.eigvals(mb_jacobian(state, p))
    lead = float(np.max(eig.real))
    if lead < -1e-9:
        tag = "stable"
    elif abs(lead) <= 1e-9:
        tag = "marginal"
    else:
        tag = "unstable"
    return tag, eig


def classify_branches(branches: list[SemiclassicalBranch],
                      p: SystemParams) -> list[SemiclassicalBranch]:
    """Fill the stability tag of damped-qubit branches in place."""
    for b in branches:
        if b.s is not None and b.w is not None:
            b.stability = mb_stability(b, p)[0]
    return branches


def _bisect(f, a, b, fa, fb, rel=1e-12, max_iter=200):
    for _ in range(max_iter):
        if b - a <= rel * max(abs(b), 1e-30):
            break
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fa < 0) != (fm < 0):
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def _scan_roots(f, f0: float, n_hi: float, brackets: int = 2048) -> list[float]:
    """Sign-change scan over (0, n_hi] followed by bisection.

    A logarithmic prefix (down to n_hi * 1e-12) is prepended to the linear
    grid because dim branches can sit many decades below the bright ones.
    Bisection refines each bracket to 1e-12 relative width.
    """
    if n_hi <= 0.0:
        return []
    log_lo = n_hi * 1e-12
    grid = np.concatenate([
        np.geomspace(log_lo, n_hi / brackets, 256, endpoint=False),
        np.linspace(n_hi / brackets, n_hi, brackets),
    ])
    roots = []
    prev_n, prev_f = 0.0, f0
    for n in grid:
        fn = f(n)
        if fn == 0.0:
            roots.append(float(n))
        elif (prev_f < 0) != (fn < 0):
            roots.append(float(_bisect(f, prev_n, n, prev_f, fn)))
        prev_n, prev_f = n, fn
    merged: list[float] = []
    for r in sorted(roots):
        if merged and abs(r - merged[-1]) <= _ROOT_MERGE_RTOL * max(abs(r), 1e-30):
            continue
        merged.append(r)
    return merged


def _with_mirror(branches, p):
    """At dwc = 0 each root gains a mirror partner with Re(alpha) negated."""
    if p.dwc != 0.0:
        return branches
    out = []
    for b in branches:
        out.append(b)
        if b.n > 0.0 and abs(b.alpha.real) > 1e-14 * abs(b.alpha):
            mirror = complex(-b.alpha.real, b.alpha.imag)
            out.append(SemiclassicalBranch(mirror, abs(mirror) ** 2, None, None,
                                           "unknown", "phase_bistable"))
    return out


def neoclassical_roots(p: SystemParams) -> list[SemiclassicalBranch]:
    """Roots of n [kappa^2 + (dwc - g^2 / sqrt(dwc^2 + 4 g^2 n))^2] = eps_d^2.

    Solved by bracket scan plus bisection on n in (0, 4 (eps_d/kappa)^2];
    the quadratic scan bound exceeds the empty-cavity response.  Only
    strictly positive roots are returned, except that an exact root at
    n = 0 (drive at the nonlinearity-collapse point) is kept.  At dwc = 0
    each root appears with both signs of the phase quadrature, the mirror
    tagged ``phase_bistable``.
    """
    kap2 = p.kappa ** 2
    g2 = p.g ** 2
    if p.g == 0.0:
        # Linear cavity: the single empty-cavity root in closed form.
        if p.eps_d == 0.0:
            return []
        alpha = -1j * p.eps_d / (p.kappa - 1j * p.dwc)
        return [SemiclassicalBranch(alpha, abs(alpha) ** 2, None, None,
                                    "unknown", "neoclassical")]

    def detune(n):
        return p.dwc - g2 / math.sqrt(p.dwc ** 2 + 4.0 * g2 * n)

    def f(n):
        return n * (kap2 + detune(n) ** 2) - p.eps_d ** 2

    # n -> 0 limit of n * detune(n)^2 is g^2/4 when dwc = 0, else 0.
    f0 = (0.25 * g2 if p.dwc == 0.0 else 0.0) - p.eps_d ** 2
    ns = _scan_roots(f, f0, 4.0 * (p.eps_d / p.kappa) ** 2)
    if abs(f0) == 0.0:
        ns.insert(0, 0.0)
    branches = []
    for n in ns:
        if n == 0.0:
            branches.append(SemiclassicalBranch(0j, 0.0, None, None,
                                                "unknown", "neoclassical"))
            continue
        alpha = -1j * p.eps_d / (p.kappa - 1j * detune(n))
        branches.append(SemiclassicalBranch(alpha, abs(alpha) ** 2, None, None,
                                            "unknown", "neoclassical"))
    return _with_mirror(branches, p)


def kerr_roots(p: SystemParams) -> list[SemiclassicalBranch]:
    """Roots of the dispersive state equation with nonlinearity g^2/delta.

    n [kappa^2 + (dwc + (g^2/delta)(1 + n/n_k)^{-1/2})^2] = eps_d^2 with
    n_k = (delta / 2g)^2; undefined at delta = 0 (DeltaZero), where the
    neoclassical equation is the right object.
    """
    if p.delta == 0.0:
        raise DeltaZero("delta = 0: use neoclassical_roots")
    kap2 = p.kappa ** 2
    if p.g == 0.0:
        chi = 0.0
        n_k = math.inf
    else:
        chi = p.g ** 2 / p.delta
        n_k = (p.delta / (2.0 * p.g)) ** 2

    def detune(n):
        return p.dwc + chi / math.sqrt(1.0 + n / n_k)

    def f(n):
        return n * (kap2 + detune(n) ** 2) - p.eps_d ** 2

    ns = _scan_roots(f, -(p.eps_d ** 2), 4.0 * (p.eps_d / p.kappa) ** 2)
    branches = []
    for n in ns:
        alpha = -1j * p.eps_d / (p.kappa - 1j * detune(n))
        branches.append(SemiclassicalBranch(alpha, abs(alpha) ** 2, None, None,
                                            "unknown", "kerr"))
    return branches


def resonance_amplitude(p: SystemParams, variant: str = "plain") -> list[SemiclassicalBranch]:
    """On-resonance asymptotic photon number and its split-Lorentzian form.

    plain:        n [kappa^2 + (g / 2 sqrt(n))^2] = eps_d^2, i.e. the closed
                  form n = (eps_d^2 - g^2/4) / kappa^2 for eps_d >= g/2
                  (dwc is ignored); mirror partner tagged phase_bistable.
    split_minus:  n [kappa^2 + (dwc - g / 2 sqrt(n))^2] = eps_d^2
    split_plus:   same with + g / 2 sqrt(n).
    """
    if variant not in ("plain", "split_plus", "split_minus"):
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "plain":
        num = p.eps_d ** 2 - 0.25 * p.g ** 2
        if num < 0.0:
            return []
        n = num / p.kappa ** 2
        if n == 0.0:
            return [SemiclassicalBranch(0j, 0.0, None, None, "unknown", "resonance")]
        alpha = -1j * p.eps_d / (p.kappa + 1j * p.g / (2.0 * math.sqrt(n)))
        first = SemiclassicalBranch(alpha, abs(alpha) ** 2, None, None,
                                    "unknown", "resonance")
        mirror_alpha = complex(-alpha.real, alpha.imag)
        second = SemiclassicalBranch(mirror_alpha, abs(mirror_alpha) ** 2, None, None,
                                     "unknown", "phase_bistable")
        return [first, second]

    sign = -1.0 if variant == "split_minus" else 1.0
    kap2 = p.kappa ** 2

    def detune(n):
        return p.dwc + sign * p.g / (2.0 * math.sqrt(n))

    def f(n):
        return n * (kap2 + detune(n) ** 2) - p.eps_d ** 2

    # n -> 0 limit of n * detune(n)^2 is g^2/4 for any dwc.
    f0 = 0.25 * p.g ** 2 - p.eps_d ** 2
    ns = _scan_roots(f, f0, 4.0 * (p.eps_d / p.kappa) ** 2)
    if abs(f0) == 0.0:
        ns.insert(0, 0.0)
    branches = []
    for n in ns:
        if n == 0.0:
            branches.append(SemiclassicalBranch(0j, 0.0, None, None,
                                                "unknown", "split_lorentzian"))
            continue
        alpha = -1j * p.eps_d / (p.kappa - 1j * detune(n))
        branches.append(SemiclassicalBranch(alpha, abs(alpha) ** 2, None, None,
                                            "unknown", "split_lorentzian"))
    return branches


def scale_params(p: SystemParams) -> ScaleParams:
    """Photon-number scales of the strong- and weak-coupling limits."""
    n_sc = p.g ** 2 / (4.0 * p.kappa ** 2)
    gt = _gamma_tilde(p)
    n_mb = math.inf if p.g == 0.0 else abs(gt) ** 2 / (8.0 * p.g ** 2)
    if p.delta == 0.0:
        n_nc = 0.0
    elif p.g == 0.0:
        n_nc = math.inf
    else:
        n_nc = (p.delta / (2.0 * p.g)) ** 2
    return ScaleParams(n_sc, n_mb, n_nc)


def write_branches_csv(path, branches: list[SemiclassicalBranch],
                       params: SystemParams | None = None):
    """CSV columns source,n,re_alpha,im_alpha,stability plus a params sidecar."""
    import json
    from dataclasses import asdict
    from pathlib import Path

    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("source,n,re_alpha,im_alpha,stability\n")
        for b in branches:
            fh.write(f"{b.source},{b.n:.17g},{b.alpha.real:.17g},"
                     f"{b.alpha.imag:.17g},{b.stability}\n")
    if params is not None:
        sidecar = asdict(params)
        sidecar["dwq"] = params.dwq
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")

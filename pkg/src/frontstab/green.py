"""Time Green function G(x,t;y) of the linearized front equation,
reconstructed by contour quadrature of the resolvent, plus the
delta-evolution oracle and the two pointwise decompositions
G = E + Gtilde (projection form) and G = F + Htilde (spreading form).

The contour Gamma~ is the union of a vertical segment from
-eta/2 - i kappa to -eta/2 + i kappa and two sector rays
Re lambda = -eta/4 - theta2 |Im lambda| with theta2 = eta/(4 kappa),
traversed upward.  With R_lambda = (lambda I - L)^{-1} kernel and the
simple discrete eigenvalue lambda_0 ~ 0 (residue phi psi~),

    G(x,t;y) = e^{lambda_0 t} phi(x) psi~(y)
               + (1/2 pi i) int_Gamma~ e^{lambda t}
                 [R_lambda(x,y) - phi(x) psi~(y)/(lambda - lambda_0)] dlambda.

All kernel-grade solves use the 2nd-order operator (Green-function
solves are superconvergent on the 3-point stencil; see tests).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .numerics import Grid1D, errfn, trapezoid_weights
from .profile import FrontProfile
from .spectral import DiscretizedOperator, SpectralData

__all__ = [
    "ContourSpec",
    "GreenField",
    "QuadratureUnconvergedError",
    "cutoff_chi",
    "cutoff_chi_prime",
    "build_contour",
    "kernel_operator",
    "discrete_zero_pair",
    "green_kernel",
    "green_apply",
    "green_evolve",
    "spreading_factor",
    "decompose_first",
    "decompose_second",
    "compute_green_field",
]

TRUNCATION_LOG = -np.log(1e-12)  # e^{Re lambda * t_min} below 1e-12


class QuadratureUnconvergedError(RuntimeError):
    """Doubling the contour nodes still changes the reconstruction."""


# ---------------------------------------------------------------------------
# Cutoff in time.
# ---------------------------------------------------------------------------

def cutoff_chi(t):
    """Smooth cutoff: 0 for t <= 1, 1 for t >= 2, quintic smoothstep
    6 s^5 - 15 s^4 + 10 s^3 (s = t - 1) in between (C^2 matching)."""
    t = np.asarray(t, dtype=float)
    s = np.clip(t - 1.0, 0.0, 1.0)
    out = s**3 * (6.0 * s**2 - 15.0 * s + 10.0)
    return out if out.ndim else float(out)


def cutoff_chi_prime(t):
    """Derivative of cutoff_chi: 30 s^2 (s - 1)^2 on [1, 2], else 0."""
    t = np.asarray(t, dtype=float)
    s = t - 1.0
    inside = (s > 0.0) & (s < 1.0)
    out = np.where(inside, 30.0 * s**2 * (s - 1.0) ** 2, 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Contour construction.
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContourSpec:
    """Quadrature nodes and weights along Gamma~ (oriented upward).

    sum(weights * f(nodes)) approximates the contour integral of f; the
    nodes come in conjugate pairs.  lambda_cut is the truncation radius
    of the sector rays, t_min the smallest time the truncation supports.
    """

    eta: float
    kappa: float
    theta1: float
    theta2: float
    t_min: float
    t_max: float
    nodes_per_panel: int
    lambda_cut: float
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n_nodes(self):
        return self.nodes.size


def _gauss_panels(breaks, m):
    """Gauss-Legendre nodes/weights on consecutive panels of `breaks`."""
    xs, ws = np.polynomial.legendre.leggauss(m)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes.append(mid + half * xs)
        weights.append(half * ws)
    return np.concatenate(nodes), np.concatenate(weights)


def build_contour(eta, kappa=1.0, t_min=0.5, t_max=20.0, nodes_per_panel=16) -> ContourSpec:
    """Contour with composite Gauss-Legendre panels.

    Segment panels scale with kappa * t_max (oscillation e^{i Im lambda t});
    ray panels are geometric out to the truncation arclength where
    exp(Re lambda * t_min) < 1e-12.
    """
    theta1 = eta / 4.0
    theta2 = eta / (4.0 * kappa)
    s_max = max((TRUNCATION_LOG / t_min - eta / 2.0) / theta2, 4.0 * kappa)

    # vertical segment: lambda = -eta/2 + i u, u in [-kappa, kappa]
    n_seg = max(2, int(np.ceil(kappa * t_max / 5.0)))
    seg_breaks = np.linspace(-kappa, kappa, n_seg + 1)
    u, wu = _gauss_panels(seg_breaks, nodes_per_panel)
    seg_nodes = -eta / 2.0 + 1j * u
    seg_weights = 1j * wu

    # sector rays: lambda(s) = -eta/2 -theta2 s +- i (kappa + s), s >= 0.
    # Panel length is limited by the oscillation e^{i s t}: a panel must
    # hold at most ~nodes/3.3 periods of the largest t at which its
    # amplitude e^{-theta2 s t} still matters (theta2 s t <~ 35).
    breaks = [0.0]
    while breaks[-1] < s_max:
        a = breaks[-1]
        t_resolve = min(t_max, 35.0 / (theta2 * a)) if a > 0 else t_max
        step = 0.6 * np.pi * nodes_per_panel / t_resolve
        breaks.append(min(a + step, s_max))
    s, ws = _gauss_panels(np.array(breaks), nodes_per_panel)
    up_nodes = -eta / 2.0 - theta2 * s + 1j * (kappa + s)
    up_weights = (-theta2 + 1j) * ws
    # lower ray traversed first, from the far end inward (upward
    # orientation overall): conjugate nodes, weights pick up the reversed
    # traversal sign
    dn_nodes = np.conj(up_nodes)[::-1]
    dn_weights = -np.conj(up_weights)[::-1]

    nodes = np.concatenate([dn_nodes, seg_nodes, up_nodes])
    weights = np.concatenate([dn_weights, seg_weights, up_weights])
    lam_cut = float(np.abs(up_nodes[-1]))
    return ContourSpec(eta=eta, kappa=kappa, theta1=theta1, theta2=theta2,
                       t_min=t_min, t_max=t_max, nodes_per_panel=nodes_per_panel,
                       lambda_cut=lam_cut, nodes=nodes, weights=weights)


def refine_contour(spec: ContourSpec, factor=2) -> ContourSpec:
    """Same contour geometry with `factor` times the nodes per panel
    (for the node-doubling convergence check)."""
    return build_contour(spec.eta, spec.kappa, spec.t_min, spec.t_max,
                         nodes_per_panel=spec.nodes_per_panel * factor)


# ---------------------------------------------------------------------------
# Resolvent solves along the contour.
# ---------------------------------------------------------------------------

def kernel_operator(profile: FrontProfile) -> DiscretizedOperator:
    """The 2nd-order discretization used for all kernel-grade solves."""
    from .spectral import assemble_linearization

    op4 = assemble_linearization(profile)
    return DiscretizedOperator(grid=op4.grid, n=op4.n, potential=op4.potential,
                               stencil_order=2)


def discrete_zero_pair(op: DiscretizedOperator, profile: FrontProfile):
    """Exact (to rounding) zero eigenpair of the given discrete operator.

    Returns (lambda_0, phi, psi) with phi close to ubar', psi the left
    eigenvector as a kernel function, trapezoid <psi, phi> = 1.
    Only meaningful for operators with a translational zero mode.
    """
    if op.n != 1:
        raise NotImplementedError("zero pair implemented for scalar systems")
    N = op.grid.N
    shift = 1e-13
    lu, ab = op.banded(shift=shift, dtype=float)
    v = profile.u_bar_prime[:, 0].copy()
    v /= np.linalg.norm(v)
    for _ in range(3):
        v = solve_banded(lu, ab, v)
        v /= np.linalg.norm(v)
    lam0 = float(v @ op.apply(v))
    # scalar operator is symmetric: left vector equals right vector;
    # gauge: phi matches the ubar' amplitude, trapezoid <psi, phi> = 1
    scale = float(profile.u_bar_prime[:, 0] @ v) / float(v @ v)
    if scale == 0.0:
        raise RuntimeError("zero mode orthogonal to ubar'")
    phi = v * scale
    w = trapezoid_weights(op.grid)
    psi = phi / float((w * phi * phi).sum())
    return lam0, phi, psi


def _resolvent_columns(op, lam, y_idx):
    """(lambda I - L_h)^{-1} applied to discrete deltas at y_idx; scalar
    systems only (returns (N, len(y_idx)))."""
    N = op.grid.N
    lu, ab = op.banded(shift=lam, dtype=complex)
    rhs = np.zeros((N, len(y_idx)), dtype=complex)
    for c, j in enumerate(y_idx):
        rhs[j, c] = 1.0 / op.grid.h
    return solve_banded(lu, -ab, rhs)


def green_kernel(op: DiscretizedOperator, pole, contour: ContourSpec,
                 t_values, x_idx, y_idx, imag_tol=1e-8):
    """G(x,t;y) samples, shape (len(t), len(x_idx), len(y_idx)).

    pole: (lambda_0, phi, psi) from discrete_zero_pair, or None for
    systems without a translational mode.  Times below contour t_min are
    rejected (ray truncation would be unreliable there).
    """
    t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
    if np.any(t_values < contour.t_min - 1e-12):
        raise ValueError(f"time below contour t_min={contour.t_min}")
    x_idx = np.asarray(x_idx)
    y_idx = np.asarray(y_idx)
    acc = np.zeros((t_values.size, x_idx.size, y_idx.size), dtype=complex)
    for lam, wgt in zip(contour.nodes, contour.weights):
        cols = _resolvent_columns(op, lam, y_idx)
        K = cols[x_idx, :].copy()
        if pole is not None:
            lam0, phi, psi = pole
            K -= np.outer(phi[x_idx], psi[y_idx]) / (lam - lam0)
        coeff = wgt * np.exp(lam * t_values) / (2j * np.pi)
        acc += coeff[:, None, None] * K[None, :, :]
    if np.max(np.abs(acc.imag)) > imag_tol:
        raise QuadratureUnconvergedError(
            f"imaginary part {np.max(np.abs(acc.imag)):.3g} exceeds {imag_tol:g}")
    G = acc.real
    if pole is not None:
        lam0, phi, psi = pole
        G = G + np.exp(lam0 * t_values)[:, None, None] * \
            np.outer(phi[x_idx], psi[y_idx])[None, :, :]
    return G


def green_apply(op: DiscretizedOperator, pole, contour: ContourSpec,
                g, t_values, imag_tol=1e-8):
    """e^{Lt} g by contour quadrature, shape (len(t), N)."""
    t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
    if np.any(t_values < contour.t_min - 1e-12):
        raise ValueError(f"time below contour t_min={contour.t_min}")
    g = np.asarray(g, dtype=float)
    w = trapezoid_weights(op.grid)
    acc = np.zeros((t_values.size, op.grid.N), dtype=complex)
    for lam, wgt in zip(contour.nodes, contour.weights):
        lu, ab = op.banded(shift=lam, dtype=complex)
        sol = solve_banded(lu, -ab, g.astype(complex))
        if pole is not None:
            lam0, phi, psi = pole
            sol -= phi * (float((w * psi * g).sum()) / (lam - lam0))
        coeff = wgt * np.exp(lam * t_values) / (2j * np.pi)
        acc += coeff[:, None] * sol[None, :]
    if np.max(np.abs(acc.imag)) > imag_tol:
        raise QuadratureUnconvergedError(
            f"imaginary part {np.max(np.abs(acc.imag)):.3g} exceeds {imag_tol:g}")
    out = acc.real
    if pole is not None:
        lam0, phi, psi = pole
        out = out + np.exp(lam0 * t_values)[:, None] * \
            (phi * float((w * psi * g).sum()))[None, :]
    return out


# ---------------------------------------------------------------------------
# Delta-evolution oracle (IMEX in time; here the problem is linear so the
# Crank-Nicolson step is the whole scheme).
# ---------------------------------------------------------------------------

def _cn_march(op: DiscretizedOperator, v0, t_values, dt_target):
    """Crank-Nicolson march of v_t = L v recording requested times."""
    t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
    order = np.argsort(t_values)
    out = np.empty((t_values.size, v0.size))
    v = v0.astype(float).copy()
    t_now = 0.0
    for k in order:
        t_target = t_values[k]
        span = t_target - t_now
        if span < -1e-12:
            raise ValueError("t_values must be nonnegative")
        if span > 1e-14:
            steps = max(1, int(np.ceil(span / dt_target)))
            dt = span / steps
            luA, abA = op.banded_identity_minus(0.5 * dt)
            for _ in range(steps):
                rhs = v + 0.5 * dt * op.apply(v)
                v = solve_banded(luA, abA, rhs)
            t_now = t_target
        out[k] = v
    return out


def green_evolve(op: DiscretizedOperator, t_values, y_index, delta_width,
                 dt_target=2e-3):
    """G(., t; y) oracle: evolve a unit-mass Gaussian of width delta_width
    centered at y and Richardson-extrapolate the width to zero
    (two widths w, w/sqrt(2): G ~ 2 g_{w/sqrt2} - g_w)."""
    grid = op.grid
    if delta_width < 2 * grid.h:
        raise ValueError("delta_width must be at least 2h")
    if op.n != 1:
        raise NotImplementedError("evolution oracle implemented for scalar systems")
    w = trapezoid_weights(grid)
    sols = []
    for width in (delta_width, delta_width / np.sqrt(2.0)):
        prof = np.exp(-((grid.x - grid.x[y_index]) ** 2) / (2.0 * width**2))
        prof /= float((w * prof).sum())  # unit trapezoid mass
        sols.append(_cn_march(op, prof, t_values, dt_target))
    return 2.0 * sols[1] - sols[0]


# ---------------------------------------------------------------------------
# Decompositions.
# ---------------------------------------------------------------------------

def spreading_factor(x, t, y, M=4.0):
    """errfn((x-y+t)/sqrt(M t)) - errfn((x-y-t)/sqrt(M t)) on a broadcast
    (x, y) box at one time."""
    if not t > 0:
        raise ValueError("t must be positive")
    w = np.subtract.outer(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    root = np.sqrt(M * t)
    return errfn((w + t) / root) - errfn((w - t) / root)


def decompose_first(G, t_values, x, y, profile: FrontProfile, psi_tilde):
    """E = ubar'(x) chi(t) psi~(y) and Gtilde = G - E."""
    ubar_p = np.interp(x, profile.grid.x, profile.u_bar_prime[:, 0])
    psi = np.interp(y, profile.grid.x, psi_tilde[:, 0])
    chi = cutoff_chi(np.asarray(t_values))
    E = chi[:, None, None] * np.outer(ubar_p, psi)[None, :, :]
    return E, G - E


def decompose_second(G, t_values, x, y, profile: FrontProfile, psi_tilde):
    """F = ubar'(x) e~(x,t;y) with the errfn spreading factor (M = 4 in
    the errfn arguments per the displayed kernel) and Htilde = G - F."""
    ubar_p = np.interp(x, profile.grid.x, profile.u_bar_prime[:, 0])
    psi = np.interp(y, profile.grid.x, psi_tilde[:, 0])
    F = np.empty_like(G)
    for k, t in enumerate(np.atleast_1d(t_values)):
        chi = cutoff_chi(t)
        if chi == 0.0:
            F[k] = 0.0
            continue
        F[k] = chi * ubar_p[:, None] * spreading_factor(x, t, y, M=4.0) * psi[None, :]
    return F, G - F


@dataclass(eq=False)
class GreenField:
    """Sampled G(x,t;y) with both decompositions on an (t, x, y) box.

    G_y holds the y-derivative samples (centered differences of kernel
    columns at the grid resolution) when requested.
    """

    t_values: np.ndarray
    x: np.ndarray
    y: np.ndarray
    G: np.ndarray
    E: np.ndarray
    G_tilde: np.ndarray
    F: np.ndarray
    H_tilde: np.ndarray
    G_y: np.ndarray = None
    G_tilde_y: np.ndarray = None
    H_tilde_y: np.ndarray = None
    eta0: float = None


def compute_green_field(profile: FrontProfile, sd: SpectralData,
                        t_values, x_idx, y_idx, kappa=1.0,
                        nodes_per_panel=16, with_y_derivative=False,
                        op=None, pole=None, contour=None) -> GreenField:
    """Reconstruct G on the sample box and form both decompositions.

    x_idx / y_idx are profile-grid indices.  When with_y_derivative is
    set, neighbor columns y +- h are reconstructed as well and the
    derivative fields are centered differences.
    """
    grid = profile.grid
    t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
    x_idx = np.asarray(x_idx, dtype=int)
    y_idx = np.asarray(y_idx, dtype=int)
    if op is None:
        op = kernel_operator(profile)
    if pole is None:
        pole = discrete_zero_pair(op, profile)
    if contour is None:
        contour = build_contour(sd.eta, kappa=kappa, t_min=float(t_values.min()),
                                t_max=float(t_values.max()),
                                nodes_per_panel=nodes_per_panel)
    if with_y_derivative:
        stacked = np.concatenate([y_idx, y_idx - 1, y_idx + 1])
        Gall = green_kernel(op, pole, contour, t_values, x_idx, stacked)
        m = y_idx.size
        G = Gall[:, :, :m]
        G_y = (Gall[:, :, 2 * m:] - Gall[:, :, m:2 * m]) / (2.0 * grid.h)
    else:
        G = green_kernel(op, pole, contour, t_values, x_idx, y_idx)
        G_y = None

    x, y = grid.x[x_idx], grid.x[y_idx]
    E, G_tilde = decompose_first(G, t_values, x, y, profile, sd.psi_tilde)
    F, H_tilde = decompose_second(G, t_values, x, y, profile, sd.psi_tilde)
    fld = GreenField(t_values=t_values, x=x, y=y, G=G, E=E, G_tilde=G_tilde,
                     F=F, H_tilde=H_tilde, G_y=G_y, eta0=sd.eta0)
    if with_y_derivative:
        psi = np.interp(y, grid.x, sd.psi_tilde[:, 0])
        psi_y = np.interp(y, grid.x,
                          np.gradient(sd.psi_tilde[:, 0], grid.h))
        ubar_p = np.interp(x, grid.x, profile.u_bar_prime[:, 0])
        chi = cutoff_chi(t_values)
        E_y = chi[:, None, None] * np.outer(ubar_p, psi_y)[None, :, :]
        fld.G_tilde_y = G_y - E_y
        F_y = np.empty_like(G_y)
        for k, t in enumerate(t_values):
            c = cutoff_chi(t)
            if c == 0.0:
                F_y[k] = 0.0
                continue
            spread = spreading_factor(x, t, y, M=4.0)
            w = np.subtract.outer(x, y)
            root = np.sqrt(4.0 * t)
            dspread = (-np.exp(-((w + t) / root) ** 2)
                       + np.exp(-((w - t) / root) ** 2)) / (root * np.sqrt(np.pi))
            F_y[k] = c * ubar_p[:, None] * (spread * psi_y[None, :] + dspread * psi[None, :])
        fld.H_tilde_y = G_y - F_y
    return fld

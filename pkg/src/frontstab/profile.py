"""Stationary front profiles: solve ubar_xx + f(ubar) = 0 with
ubar(+-inf) = u+- on a truncated domain and measure the exponential tails.

The production path is a damped Newton iteration on the finite-difference
boundary value problem, initialized from a logistic ramp.  For scalar
systems there is an independent first-order (energy integral) route used
as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .numerics import Grid1D, sampled_derivative
from .systems import ReactionSystem, eval_jacobian, eval_reaction

__all__ = ["FrontProfile", "NoConnectionError", "solve_profile",
           "solve_profile_shooting", "tail_rates", "profile_derivative"]


class NoConnectionError(RuntimeError):
    """The system admits no stationary front (or Newton failed to find one)."""


@dataclass(frozen=True, eq=False)
class FrontProfile:
    """Converged front samples ubar, ubar' on a grid, with tail data.

    u_bar and u_bar_prime have shape (N, n).  tail_rate_minus/plus are the
    measured exponential decay rates of |ubar - u[-+]| on each half-line,
    tail_amp_* the fitted prefactors, residual_sup the sup norm of the
    discrete profile equation.
    """

    grid: Grid1D
    system: ReactionSystem
    u_bar: np.ndarray
    u_bar_prime: np.ndarray
    residual_sup: float
    tail_rate_minus: float
    tail_rate_plus: float
    tail_amp_minus: float
    tail_amp_plus: float
    fd_order: int

    def component(self, j=0) -> np.ndarray:
        return self.u_bar[:, j]

    def shifted(self, delta) -> np.ndarray:
        """ubar(x - delta) resampled on the grid (cubic interpolation,
        end-state values beyond the truncation)."""
        out = np.empty_like(self.u_bar)
        for j in range(self.u_bar.shape[1]):
            spl = CubicSpline(self.grid.x, self.u_bar[:, j])
            xq = np.clip(self.grid.x - delta, self.grid.x_min, self.grid.x_max)
            out[:, j] = spl(xq)
            out[self.grid.x - delta < self.grid.x_min, j] = self.system.u_minus[j]
            out[self.grid.x - delta > self.grid.x_max, j] = self.system.u_plus[j]
        return out


def _profile_residual(sys, grid, U, order):
    """Discrete ubar_xx + f(ubar) on interior nodes, rows for all N nodes
    (boundary rows hold the Dirichlet defect)."""
    from .systems import reaction_samples

    N, n = U.shape
    h = grid.h
    F = np.empty_like(U)
    F[0] = U[0] - sys.u_minus
    F[-1] = U[-1] - sys.u_plus
    d2 = np.empty((N - 2, n))
    d2[:] = (U[:-2] - 2 * U[1:-1] + U[2:]) / h**2
    if order == 4:
        # five-point interior stencil; keep the three-point one on the
        # first interior node where the wide stencil does not fit
        d2[1:-1] = (-U[:-4] + 16 * U[1:-3] - 30 * U[2:-2] + 16 * U[3:-1] - U[4:]) / (12 * h**2)
    F[1:-1] = d2 + reaction_samples(sys, U[1:-1])
    return F


def _newton_banded_jacobian(sys, grid, U, order):
    """Banded Jacobian of _profile_residual for solve_banded, interleaved
    node-major layout."""
    N, n = U.shape
    h = grid.h
    width = 2 * n if order == 4 else n
    nl = nu = width + (n - 1)
    ab = np.zeros((nl + nu + 1, N * n))

    def put(row, col, val):
        ab[nu + row - col, col] += val

    big = 1.0  # boundary rows: identity
    for j in range(n):
        put(j, j, big)
        put((N - 1) * n + j, (N - 1) * n + j, big)

    for i in range(1, N - 1):
        J = eval_jacobian(sys, U[i])
        base = i * n
        wide = order == 4 and 2 <= i <= N - 3
        if wide:
            c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12 * h**2)
            offsets = (-2, -1, 0, 1, 2)
        else:
            c = np.array([1.0, -2.0, 1.0]) / h**2
            offsets = (-1, 0, 1)
        for coeff, off in zip(c, offsets):
            for j in range(n):
                put(base + j, (i + off) * n + j, coeff)
        for j in range(n):
            for k in range(n):
                put(base + j, base + k, J[j, k])
    return (nl, nu), ab


def solve_profile(sys: ReactionSystem, grid: Grid1D, tol=1e-10, max_iter=60,
                  fd_order=4, anchor=True) -> FrontProfile:
    """Damped Newton solve of the front boundary value problem.

    The iteration starts from a logistic ramp between the end states and
    is declared converged when the sup norm of the discrete residual
    falls below tol.  Raises NoConnectionError when the end states
    coincide or Newton stalls.
    """
    if np.max(np.abs(sys.u_minus - sys.u_plus)) < 1e-10:
        raise NoConnectionError(f"'{sys.name}': equal end states, no front connects them")
    from .systems import end_state_spectrum
    end_state_spectrum(sys)  # raises if the end states are not hyperbolic sinks

    N, n = grid.N, sys.n
    ramp = 1.0 / (1.0 + np.exp(grid.x))  # 1 at -inf, 0 at +inf
    U = sys.u_plus[None, :] + ramp[:, None] * (sys.u_minus - sys.u_plus)[None, :]

    F = _profile_residual(sys, grid, U, fd_order)
    fnorm = np.max(np.abs(F))
    for _ in range(max_iter):
        if fnorm < tol:
            break
        (nl, nu), ab = _newton_banded_jacobian(sys, grid, U, fd_order)
        delta = solve_banded((nl, nu), ab, -F.ravel()).reshape(N, n)
        step = 1.0
        while step > 1e-6:
            U_try = U + step * delta
            F_try = _profile_residual(sys, grid, U_try, fd_order)
            fnorm_try = np.max(np.abs(F_try))
            if fnorm_try < (1.0 - 0.5 * step) * fnorm or fnorm_try < tol:
                break
            step *= 0.5
        else:
            raise NoConnectionError(f"'{sys.name}': Newton line search stalled")
        U, F, fnorm = U_try, F_try, fnorm_try
    if fnorm >= tol:
        raise NoConnectionError(
            f"'{sys.name}': Newton did not reach tol={tol:g} (residual {fnorm:.3g})")

    if anchor:
        U = _anchor_midpoint(sys, grid, U)
        fnorm = np.max(np.abs(_profile_residual(sys, grid, U, fd_order)))

    prime = np.column_stack([sampled_derivative(U[:, j], grid.h, order=4)
                             for j in range(n)])
    rates = _fit_tail_rates(sys, grid, U)
    return FrontProfile(grid=grid, system=sys, u_bar=U, u_bar_prime=prime,
                        residual_sup=float(fnorm),
                        tail_rate_minus=rates[0][0], tail_rate_plus=rates[1][0],
                        tail_amp_minus=rates[0][1], tail_amp_plus=rates[1][1],
                        fd_order=fd_order)


def _anchor_midpoint(sys, grid, U):
    """Shift the profile so the first component crosses its midpoint value
    at x = 0 (translation gauge)."""
    mid = 0.5 * (sys.u_minus[0] + sys.u_plus[0])
    g = U[:, 0] - mid
    sign_change = np.where(g[:-1] * g[1:] <= 0)[0]
    if len(sign_change) == 0:
        raise NoConnectionError("profile does not cross its midpoint value")
    i = sign_change[len(sign_change) // 2]
    spl0 = CubicSpline(grid.x, g)
    from scipy.optimize import brentq
    x_star = brentq(spl0, grid.x[i], grid.x[i + 1], xtol=1e-14)
    if abs(x_star) < 1e-14:
        return U
    out = np.empty_like(U)
    for j in range(U.shape[1]):
        spl = CubicSpline(grid.x, U[:, j])
        xq = grid.x + x_star
        out[:, j] = np.where(xq < grid.x_min, sys.u_minus[j],
                             np.where(xq > grid.x_max, sys.u_plus[j],
                                      spl(np.clip(xq, grid.x_min, grid.x_max))))
    return out


def _fit_tail_rates(sys, grid, U, floor=1e-12, min_points=10, margin_frac=0.1):
    """Log-linear fits of |ubar - u(+-)| over the outer quarter of each
    half-domain.  The last margin_frac of the half-domain is excluded
    (the Dirichlet truncation bends the tail there) and the window
    shrinks inward when the tail underflows the fit floor."""
    x = grid.x
    out = []
    for side in ("minus", "plus"):
        target = sys.u_minus if side == "minus" else sys.u_plus
        dev = np.linalg.norm(U - target[None, :], axis=1)
        half = abs(grid.x_min) if side == "minus" else abs(grid.x_max)
        coord = -x if side == "minus" else x
        outer = (1.0 - margin_frac) * half
        frac = 0.75
        sel = (coord >= frac * half) & (coord <= outer) & (dev > floor)
        while np.count_nonzero(sel) < min_points and frac > 0.05:
            frac *= 0.75
            sel = (coord >= frac * half) & (coord <= outer) & (dev > floor)
        if np.count_nonzero(sel) < 2:
            raise RuntimeError(f"tail fit degenerate on {side} side")
        slope, intercept = np.polyfit(coord[sel], np.log(dev[sel]), 1)
        out.append((float(-slope), float(np.exp(intercept))))
    return out


def tail_rates(profile: FrontProfile):
    """(rate_minus, rate_plus) measured from the stored profile."""
    return profile.tail_rate_minus, profile.tail_rate_plus


def profile_derivative(profile: FrontProfile) -> np.ndarray:
    """Sampled ubar' (fourth-order interior differences), shape (N, n)."""
    return profile.u_bar_prime


def solve_profile_shooting(sys: ReactionSystem, grid: Grid1D) -> np.ndarray:
    """Independent scalar route: on the standing-wave energy surface
    w^2/2 + F(u) = F(u-) the front solves u' = -sqrt(2(F(u-) - F(u))).

    Integrates that first-order equation outward from u(0) = midpoint
    with RK4 on the grid.  Only valid for monotone decreasing scalar
    fronts; raises NoConnectionError when the energies of the end states
    differ (no stationary connection).
    """
    if sys.n != 1:
        raise ValueError("shooting route implemented for scalar systems only")
    from scipy.integrate import quad

    u_minus, u_plus = sys.u_minus[0], sys.u_plus[0]

    def F_pot(u):
        val, _ = quad(lambda s: eval_reaction(sys, [s])[0], u_plus, u, epsabs=1e-14)
        return val

    if abs(F_pot(u_minus) - F_pot(u_plus)) > 1e-10:
        raise NoConnectionError("end-state energies differ: no stationary front")
    E = F_pot(u_minus)

    def rhs(u):
        gap = E - F_pot(u)
        return -np.sqrt(max(2.0 * gap, 0.0))

    x = grid.x
    i0 = int(np.argmin(np.abs(x)))
    u = np.empty(grid.N)
    u[i0] = 0.5 * (u_minus + u_plus)
    h = grid.h
    for i in range(i0, grid.N - 1):  # rightward
        u[i + 1] = _rk4_step(rhs, u[i], h)
    for i in range(i0, 0, -1):  # leftward
        u[i - 1] = _rk4_step(rhs, u[i], -h)
    return u


def _rk4_step(rhs, u, h):
    k1 = rhs(u)
    k2 = rhs(u + 0.5 * h * k1)
    k3 = rhs(u + 0.5 * h * k2)
    k4 = rhs(u + h * k3)
    return u + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

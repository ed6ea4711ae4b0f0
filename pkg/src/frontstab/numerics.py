"""Grids, finite-difference operators, discrete norms and the special
functions (normalized error function, Gaussian kernels) used throughout
the toolkit.

Everything here is stateless or immutable after construction, so it is
safe to share between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT_PI = np.sqrt(np.pi)

__all__ = [
    "Grid1D",
    "GaussianKernelSpec",
    "errfn",
    "erf",
    "erfc",
    "erfc_by_quadrature",
    "erfc_upper_check",
    "gaussian_kernel",
    "gaussian_density",
    "discrete_lp_norm",
    "trapezoid_weights",
    "second_difference_banded",
    "second_difference_matrix",
    "sampled_derivative",
]


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Uniform grid on [x_min, x_max] with N nodes (endpoints included)."""

    x_min: float
    x_max: float
    N: int
    h: float = field(init=False)
    x: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.N < 3:
            raise ValueError("grid needs at least 3 nodes")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        object.__setattr__(self, "h", (self.x_max - self.x_min) / (self.N - 1))
        object.__setattr__(self, "x", np.linspace(self.x_min, self.x_max, self.N))

    def __repr__(self):
        return f"Grid1D([{self.x_min}, {self.x_max}], N={self.N}, h={self.h:.4g})"


@dataclass(frozen=True)
class GaussianKernelSpec:
    """Width parameter M of the unnormalized Gaussian kernel
    K_M(x,t) = t^{-1/2} exp(-x^2/(M t))."""

    M: float

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("kernel width M must be positive")


# ---------------------------------------------------------------------------
# Error function family.  Own implementation (Taylor series for small
# argument, Lentz-style continued fraction for the tail) so that nothing
# here depends on a special-function library; validated against adaptive
# quadrature in the test suite.
# ---------------------------------------------------------------------------

_ERF_SPLIT = 2.0
_TAYLOR_TERMS = 48
_CF_DEPTH = 80


def _erf_taylor(x):
    # erf(x) = (2/sqrt(pi)) sum (-1)^n x^(2n+1) / (n! (2n+1)), |x| <= 2
    total = np.zeros_like(x)
    term = x.copy()  # (-1)^n x^(2n+1) / n!
    for n in range(_TAYLOR_TERMS):
        total += term / (2 * n + 1)
        term *= -(x * x) / (n + 1)
    return (2.0 / SQRT_PI) * total


def _erfc_cf(x):
    # Laplace continued fraction, x >= 2:
    # erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/(2x + 2/(x + 3/(2x + ...))))
    t = np.zeros_like(x)
    for k in range(_CF_DEPTH, 0, -1):
        b = 2.0 * x if k % 2 == 1 else x
        t = k / (b + t)
    return np.exp(-x * x) / SQRT_PI / (x + t)


def erf(x):
    """Error function, elementwise on arrays."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("erf argument must be finite")
    ax = np.abs(x)
    out = np.empty_like(ax)
    small = ax <= _ERF_SPLIT
    if np.any(small):
        out[small] = _erf_taylor(ax[small])
    if np.any(~small):
        out[~small] = 1.0 - _erfc_cf(ax[~small])
    out = np.where(x < 0, -out, out)
    return float(out[0]) if scalar else out


def erfc(x):
    """Complementary error function 1 - erf(x)."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    big = x >= _ERF_SPLIT
    if np.any(big):
        out[big] = _erfc_cf(x[big])
    if np.any(~big):
        out[~big] = 1.0 - erf(x[~big])
    return float(out[0]) if scalar else out


def errfn(x):
    """Normalized cumulative Gaussian (1/sqrt(pi)) * int_{-inf}^x exp(-z^2) dz.

    Monotone increasing from 0 to 1 with errfn(0) = 1/2; equals
    (1 + erf(x))/2.
    """
    return 0.5 * (1.0 + erf(x))


def erfc_by_quadrature(x, tol=1e-12):
    """erfc(x) evaluated by adaptive Gauss-Kronrod quadrature of the
    defining integral (oracle path, scalar only)."""
    from scipy.integrate import quad

    if x < 0:
        raise ValueError("erfc_by_quadrature requires x >= 0")
    val, _ = quad(lambda z: np.exp(-z * z), x, np.inf, epsabs=tol, epsrel=tol)
    return 2.0 / SQRT_PI * val


def erfc_upper_check(x, slack=1e-12):
    """Self-test of the quadrature: does erfc(x) <= exp(-x^2) + slack hold?

    Raises for negative x (the inequality is one-sided).
    """
    if x < 0:
        raise ValueError("erfc_upper_check requires x >= 0")
    return erfc_by_quadrature(x) <= np.exp(-x * x) + slack


# ---------------------------------------------------------------------------
# Gaussian kernels.
# ---------------------------------------------------------------------------

def gaussian_kernel(spec: GaussianKernelSpec, x, t):
    """Unnormalized Gaussian K_M(x,t) = t^{-1/2} exp(-x^2/(M t)), t > 0.

    Satisfies the convolution identity
    K_M(.,t1) * K_M(.,t2) = sqrt(pi M) K_M(.,t1+t2).
    """
    if not t > 0:
        raise ValueError("gaussian_kernel requires t > 0")
    x = np.asarray(x, dtype=float)
    return t ** -0.5 * np.exp(-(x * x) / (spec.M * t))


def gaussian_density(x, t):
    """Heat-kernel probability density K(x,t) = (2 pi t)^{-1/2} exp(-x^2/(2t))."""
    if not t > 0:
        raise ValueError("gaussian_density requires t > 0")
    x = np.asarray(x, dtype=float)
    return np.exp(-(x * x) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)


# ---------------------------------------------------------------------------
# Discrete norms and operators.
# ---------------------------------------------------------------------------

def trapezoid_weights(grid: Grid1D) -> np.ndarray:
    """Trapezoid quadrature weights on the grid (h/2 at the endpoints)."""
    w = np.full(grid.N, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def gregory_weights(n_points, h):
    """Gregory end-corrected trapezoid weights (third order corrections,
    O(h^4) for smooth integrands).  Unlike composite Simpson the weights
    do not alternate with the parity of the interval count, so quadrature
    series indexed by a growing upper limit stay smooth in the limit.
    Falls back to Simpson / trapezoid for short grids."""
    if n_points < 7:
        return composite_simpson_weights(n_points, h)
    w = np.full(n_points, h)
    edge = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0]) * h
    w[:3] = edge
    w[-3:] = edge[::-1]
    return w


def composite_simpson_weights(n_points, h):
    """Weights of composite Simpson quadrature on a uniform grid
    (3/8 rule on the last panel when the interval count is odd;
    trapezoid fallback below 3 points)."""
    w = np.zeros(n_points)
    if n_points == 1:
        return w
    if n_points == 2:
        w[:] = 0.5 * h
        return w
    n_int = n_points - 1
    m = n_int if n_int % 2 == 0 else n_int - 3
    if m > 0:
        w[0] += h / 3.0
        w[m] += h / 3.0
        w[1:m:2] += 4.0 * h / 3.0
        w[2:m:2] += 2.0 * h / 3.0
    if n_int % 2 == 1:
        if m == 0:  # exactly 3 intervals: pure 3/8 rule
            w[[0, 1, 2, 3]] += np.array([3, 9, 9, 3]) * h / 8.0
        else:
            w[[m, m + 1, m + 2, m + 3]] += np.array([3, 9, 9, 3]) * h / 8.0
    return w


def discrete_lp_norm(values, p, grid: Grid1D):
    """Trapezoid-weighted l^p norm of grid samples; p = inf gives max |v|.

    For vector-valued samples (shape (N, n)) the pointwise Euclidean
    magnitude is taken first.
    """
    if p < 1:
        raise ValueError("discrete_lp_norm requires p >= 1")
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("discrete_lp_norm requires finite samples")
    mag = np.abs(v) if v.ndim == 1 else np.sqrt((v * v).sum(axis=1))
    if np.isinf(p):
        return float(mag.max())
    w = trapezoid_weights(grid)
    return float((w * mag**p).sum() ** (1.0 / p))


def second_difference_banded(grid: Grid1D) -> np.ndarray:
    """Banded (3, N) form of the centered stencil (1, -2, 1)/h^2 with
    homogeneous Dirichlet closure (ghost values outside the grid are 0).

    Layout matches scipy.linalg.solve_banded with (l, u) = (1, 1).
    """
    N, h = grid.N, grid.h
    band = np.zeros((3, N))
    band[0, 1:] = 1.0 / h**2
    band[1, :] = -2.0 / h**2
    band[2, :-1] = 1.0 / h**2
    return band


def second_difference_matrix(grid: Grid1D) -> np.ndarray:
    """Dense N x N matrix of the same operator (used for eigensolves)."""
    N, h = grid.N, grid.h
    A = np.zeros((N, N))
    idx = np.arange(N)
    A[idx, idx] = -2.0 / h**2
    A[idx[:-1], idx[:-1] + 1] = 1.0 / h**2
    A[idx[1:], idx[1:] - 1] = 1.0 / h**2
    return A


def sampled_derivative(values, h, order=4):
    """First derivative of uniformly sampled values.

    order=4 uses the five-point interior stencil with one-sided
    second-order closures near the boundary; order=2 is plain centered
    differences with one-sided ends.
    """
    v = np.asarray(values, dtype=float)
    d = np.empty_like(v)
    if order == 2:
        d[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    elif order == 4:
        d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
        d[1] = (v[2] - v[0]) / (2 * h)
        d[-2] = (v[-1] - v[-3]) / (2 * h)
    else:
        raise ValueError("order must be 2 or 4")
    d[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    d[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return d

from __future__ import annotations

import numpy as np
import pytest

from frontstab.numerics import (
    GaussianKernelSpec,
    Grid1D,
    discrete_lp_norm,
    erfc_by_quadrature,
    erfc_upper_check,
    errfn,
    gaussian_kernel,
    sampled_derivative,
    second_difference_banded,
    second_difference_matrix,
    trapezoid_weights,
)

RNG = np.random.default_rng(20240811)


def quad_errfn(x):
    # independent oracle: adaptive quadrature of the defining integral
    from scipy.integrate import quad

    val, _ = quad(lambda z: np.exp(-z * z), -np.inf, x, epsabs=1e-12, epsrel=1e-12)
    return val / np.sqrt(np.pi)


def test_errfn_basic_values():
    assert errfn(0.0) == pytest.approx(0.5, abs=1e-14)
    assert errfn(30.0) == pytest.approx(1.0, abs=1e-15)
    assert errfn(-30.0) == pytest.approx(0.0, abs=1e-15)
    # frozen from the quadrature oracle, tol 1e-10
    assert errfn(1.0) == pytest.approx(0.9213503964748574, abs=1e-10)


def test_errfn_matches_quadrature():
    for x in [-5.5, -2.0, -0.3, 0.17, 1.0, 1.9, 2.1, 3.7, 6.0]:
        assert errfn(x) == pytest.approx(quad_errfn(x), abs=1e-12)


def test_errfn_symmetry_and_monotonicity():
    xs = RNG.uniform(-6, 6, size=50)
    vals = errfn(xs)
    assert np.max(np.abs(vals + errfn(-xs) - 1.0)) < 1e-12
    grid_vals = errfn(np.linspace(-8, 8, 2001))
    assert np.all(np.diff(grid_vals) >= 0)


def test_erfc_upper_bound_self_test():
    assert erfc_upper_check(0.0)  # equality case: erfc(0) = 1
    assert erfc_upper_check(1.0)
    assert erfc_upper_check(3.0)
    assert erfc_by_quadrature(1.0) == pytest.approx(0.15729920705028513, abs=1e-10)
    with pytest.raises(ValueError):
        erfc_upper_check(-0.5)


def test_gaussian_kernel_values():
    spec = GaussianKernelSpec(M=4.0)
    assert gaussian_kernel(spec, 0.0, 1.0) == pytest.approx(1.0)
    assert gaussian_kernel(spec, 2.0, 1.0) == pytest.approx(np.exp(-1.0))
    with pytest.raises(ValueError):
        gaussian_kernel(spec, 0.0, 0.0)
    with pytest.raises(ValueError):
        GaussianKernelSpec(M=-1.0)


def test_gaussian_kernel_semigroup_convolution():
    # K_M(.,t1) * K_M(.,t2) = sqrt(pi M) K_M(., t1+t2)
    spec = GaussianKernelSpec(M=4.0)
    grid = Grid1D(-60.0, 60.0, 12001)
    h = grid.h
    t1, t2 = 0.7, 1.9
    k1 = gaussian_kernel(spec, grid.x, t1)
    k2 = gaussian_kernel(spec, grid.x, t2)
    conv = np.convolve(k1, k2, mode="same") * h
    target = np.sqrt(np.pi * spec.M) * gaussian_kernel(spec, grid.x, t1 + t2)
    sel = np.abs(grid.x) < 30  # away from the truncated convolution edges
    rel = np.max(np.abs(conv[sel] - target[sel])) / target.max()
    assert rel < 1e-4


def test_gaussian_kernel_mass():
    # trapezoid integral of K_M(., t): t^{-1/2} * sqrt(pi M t) = sqrt(pi M),
    # independent of t, when the domain holds +-8 sqrt(M t)
    spec = GaussianKernelSpec(M=4.0)
    for t in (0.5, 1.0, 4.0):
        half = 8.0 * np.sqrt(spec.M * t)
        grid = Grid1D(-half, half, 4001)
        vals = gaussian_kernel(spec, grid.x, t)
        mass = float(np.sum(trapezoid_weights(grid) * vals))
        assert mass == pytest.approx(np.sqrt(np.pi * spec.M), rel=1e-6)


def test_lp_norms():
    grid = Grid1D(0.0, 1.0, 101)
    ones = np.ones(grid.N)
    assert discrete_lp_norm(ones, 1, grid) == pytest.approx(1.0)
    assert discrete_lp_norm(ones, np.inf, grid) == pytest.approx(1.0)
    wide = Grid1D(-20.0, 20.0, 4001)
    vals = np.exp(-np.abs(wide.x))
    exact = 2.0 * (1.0 - np.exp(-20.0))
    assert discrete_lp_norm(vals, 1, wide) == pytest.approx(exact, abs=1e-4)
    with pytest.raises(ValueError):
        discrete_lp_norm(ones, 0.5, grid)


def test_second_difference_exactness_and_symmetry():
    grid = Grid1D(-1.0, 1.0, 201)
    A = second_difference_matrix(grid)
    const = A @ np.ones(grid.N)
    assert np.max(np.abs(const[1:-1])) < 1e-10
    quad = A @ grid.x**2
    assert np.max(np.abs(quad[1:-1] - 2.0)) < 1e-8
    assert np.max(np.abs(A - A.T)) == 0.0
    eigs = np.linalg.eigvalsh(A)
    assert eigs.max() < 0.0  # negative definite with Dirichlet closure


def test_second_difference_convergence_order():
    # interior error on sin(x) drops ~4x when h is halved
    errs = []
    for N in (201, 401):
        grid = Grid1D(-1.0, 1.0, N)
        A = second_difference_matrix(grid)
        err = A @ np.sin(grid.x) + np.sin(grid.x)
        errs.append(np.max(np.abs(err[2:-2])))
    ratio = errs[0] / errs[1]
    assert 3.5 < ratio < 4.5


def test_banded_matches_dense():
    grid = Grid1D(0.0, 1.0, 50)
    band = second_difference_banded(grid)
    A = second_difference_matrix(grid)
    v = RNG.standard_normal(grid.N)
    prod = band[1] * v
    prod[:-1] += band[0, 1:] * v[1:]
    prod[1:] += band[2, :-1] * v[:-1]
    assert np.allclose(prod, A @ v, atol=1e-12)


def test_sampled_derivative_orders():
    grid = Grid1D(-2.0, 2.0, 401)
    d4 = sampled_derivative(np.sin(grid.x), grid.h, order=4)
    assert np.max(np.abs(d4[2:-2] - np.cos(grid.x[2:-2]))) < 1e-8
    d2 = sampled_derivative(np.sin(grid.x), grid.h, order=2)
    assert np.max(np.abs(d2[1:-1] - np.cos(grid.x[1:-1]))) < 1e-4

from __future__ import annotations

import numpy as np
import pytest

from frontstab.numerics import Grid1D
from frontstab.profile import FrontProfile
from frontstab.resolvent import (
    DegenerateBasisError,
    assemble_resolvent,
    conservation_drift,
    integrate_modes,
    quadrant_kernel,
    resolvent_direct,
    verify_resolvent_bound,
)
from frontstab.spectral import DiscretizedOperator, assemble_linearization
from frontstab.systems import end_state_spectrum, polynomial_system

RNG = np.random.default_rng(314)


@pytest.fixture(scope="module")
def linear_assembly(flat_profile, linear_end_spectrum):
    basis = integrate_modes(flat_profile, linear_end_spectrum, 0.0)
    return assemble_resolvent(basis)


@pytest.fixture(scope="module")
def front_op2(front):
    """2nd-order operator used for the direct-solve oracle."""
    op = assemble_linearization(front)
    return DiscretizedOperator(grid=op.grid, n=op.n, potential=op.potential,
                               stencil_order=2)


def exact_linear_kernel(x, y, lam, c=1.0):
    mu = np.sqrt(lam + c)
    return np.exp(-mu * np.abs(x - y)) / (2.0 * mu)


def test_constant_coefficient_mode_exactness(linear_assembly, grid):
    i0 = linear_assembly.basis.i_zero
    # decaying mode at +inf is e^{-x}(1, -1)^T; the integrated family
    # reproduces it with small relative error
    fam = linear_assembly.basis.family("phi_plus")
    for i in (i0, i0 + 700, i0 - 900):
        val = fam.value(i)
        w, wp = val[0, 0], val[1, 0]
        assert wp / w == pytest.approx(-1.0, abs=1e-8)
        assert abs(w - np.exp(-grid.x[i])) / abs(np.exp(-grid.x[i])) < 1e-7


def test_constant_coefficient_kernel(linear_assembly, grid):
    i0 = linear_assembly.basis.i_zero
    idx = [i0 - 800, i0 - 150, i0, i0 + 450, i0 + 900]
    for i in idx:
        for j in idx:
            val = linear_assembly.kernel(i, j)[0, 0]
            assert val == pytest.approx(exact_linear_kernel(grid.x[i], grid.x[j], 0.0),
                                        abs=1e-4)
    assert linear_assembly.kernel(i0, i0)[0, 0].real == pytest.approx(0.5, abs=1e-8)


def test_duality_and_conservation(linear_assembly):
    basis = linear_assembly.basis
    assert basis.pairing_residual_minus < 1e-8
    assert basis.pairing_residual_plus < 1e-8
    assert conservation_drift(basis, "psi_tilde_minus", "phi_plus") < 1e-8
    assert conservation_drift(basis, "psi_tilde_plus", "phi_minus") < 1e-8


def test_m_matrices_two_forms(linear_assembly):
    asm = linear_assembly
    assert np.max(np.abs(asm.M_plus - asm.M_plus_kramer)) < 1e-8
    assert np.max(np.abs(asm.M_minus - asm.M_minus_dualform)) < 1e-8


def test_jump_identities_linear(linear_assembly):
    i0 = linear_assembly.basis.i_zero
    for j in (i0 - 500, i0, i0 + 777):
        res = linear_assembly.jump_residuals(j)
        assert res.max() < 1e-6


def test_jump_identities_bistable(front, spectral_data):
    es = spectral_data.end_spectrum
    lam = -0.5 * spectral_data.eta  # midpoint of the bounded contour segment
    basis = integrate_modes(front, es, lam)
    asm = assemble_resolvent(basis)
    i0 = basis.i_zero
    idx = i0 + RNG.integers(-1200, 1200, size=10)
    for j in idx:
        assert asm.jump_residuals(int(j)).max() < 1e-6


def test_quadrant_forms_match_master(front, spectral_data):
    es = spectral_data.end_spectrum
    lam = complex(-0.5 * spectral_data.eta, 0.3)
    asm = assemble_resolvent(integrate_modes(front, es, lam))
    i0 = asm.basis.i_zero
    pairs = [(i0 + 400, i0 - 400), (i0 - 200, i0 - 600),
             (i0 - 700, i0 + 100), (i0 - 650, i0 - 100), (i0, i0 - 50)]
    for i, j in pairs:
        km = asm.kernel(i, j)[0, 0]
        kq = quadrant_kernel(asm, i, j)[0, 0]
        assert abs(km - kq) <= 1e-8 * max(1.0, abs(km))


def test_mode_vs_direct_bistable(front, spectral_data, front_op2):
    # cross-method equivalence at 5 contour points on the bounded segment
    eta = spectral_data.eta
    kappa = 1.0
    lams = [complex(-eta / 2, t * kappa) for t in (-1.0, -0.5, 0.0, 0.5, 1.0)]
    i0 = int(np.argmin(np.abs(front.grid.x)))
    y_idx = [i0 - 600, i0, i0 + 350]
    x_idx = np.arange(200, front.grid.N - 200, 60)
    for lam in lams:
        asm = assemble_resolvent(integrate_modes(front, spectral_data.end_spectrum, lam))
        direct = resolvent_direct(front_op2, lam, y_idx)
        worst = 0.0
        for c, j in enumerate(y_idx):
            mode_vals = asm.kernel_row(j, x_idx)
            direct_vals = direct[x_idx, 0, c, 0]
            scale = np.abs(direct_vals).max()
            worst = max(worst, np.abs(mode_vals - direct_vals).max() / scale)
        assert worst < 1e-4


def test_direct_solve_linearity(front_op2):
    lam = -0.2 + 0.4j
    i0 = front_op2.grid.N // 2
    sol = resolvent_direct(front_op2, lam, [i0])
    lu_ab = front_op2.banded(shift=lam, dtype=complex)
    # doubling the delta amplitude doubles the solution exactly
    rhs = np.zeros(front_op2.grid.N, dtype=complex)
    rhs[i0] = 2.0 / front_op2.grid.h
    from scipy.linalg import solve_banded

    sol2 = solve_banded(lu_ab[0], -lu_ab[1], rhs)
    assert np.allclose(sol2, 2.0 * sol[:, 0, 0, 0], rtol=1e-13, atol=1e-16)


def test_direct_constant_coefficient(flat_profile):
    op = DiscretizedOperator(grid=flat_profile.grid, n=1,
                             potential=np.full((flat_profile.grid.N, 1, 1), -1.0),
                             stencil_order=2)
    i0 = flat_profile.grid.N // 2
    sol = resolvent_direct(op, 0.0, [i0])
    exact = exact_linear_kernel(flat_profile.grid.x, flat_profile.grid.x[i0], 0.0)
    assert np.max(np.abs(sol[:, 0, 0, 0] - exact)) < 1e-3


def test_analyticity_cauchy_mean(front, spectral_data, front_op2):
    # mean of R_lambda(x0, y0) over a small circle equals the center value
    eta = spectral_data.eta
    center = complex(-eta / 2, 0.45)
    radius = 0.04
    i0 = front_op2.grid.N // 2
    ix, iy = i0 + 250, i0 - 400
    vals = []
    for theta in np.linspace(0, 2 * np.pi, 16, endpoint=False):
        lam = center + radius * np.exp(1j * theta)
        vals.append(resolvent_direct(front_op2, lam, [iy])[ix, 0, 0, 0])
    center_val = resolvent_direct(front_op2, center, [iy])[ix, 0, 0, 0]
    assert abs(np.mean(vals) - center_val) < 1e-6


def test_symmetry_scalar_real_lambda(front_op2):
    lam = -0.21
    i0 = front_op2.grid.N // 2
    i, j = i0 + 321, i0 - 456
    sol_j = resolvent_direct(front_op2, lam, [j])[i, 0, 0, 0]
    sol_i = resolvent_direct(front_op2, lam, [i])[j, 0, 0, 0]
    assert abs(sol_i - sol_j) < 1e-8


def test_degenerate_basis_at_eigenvalue(front, spectral_data):
    # lambda at the (near-)zero eigenvalue makes (Phi+, Phi-) singular
    with pytest.raises(DegenerateBasisError):
        asm = assemble_resolvent(
            integrate_modes(front, spectral_data.end_spectrum, spectral_data.zero_eig))


def test_resolvent_bound_fit(front, spectral_data, front_op2, grid):
    # |Rtilde_lambda(x,y)| <= C exp(-eta'(|x|+|y|)) over the bounded segment
    eta = spectral_data.eta
    lams = [complex(-eta / 2, im) for im in np.linspace(-1.0, 1.0, 9)]
    i0 = grid.N // 2
    y_idx = np.array([i0 - 900, i0 - 450, i0, i0 + 450, i0 + 900])
    x_idx = np.arange(150, grid.N - 150, 30)
    kernels = []
    for lam in lams:
        direct = resolvent_direct(front_op2, lam, y_idx)
        kernels.append(direct[x_idx, 0, :, 0])
    C, loc, ratios = verify_resolvent_bound(
        kernels, grid.x[x_idx], grid.x[y_idx], front, spectral_data.psi_tilde,
        lams, spectral_data.eta_prime, zero_eig=spectral_data.zero_eig)
    assert np.isfinite(C) and C > 0
    # moving both |x|,|y| outward by delta shrinks |R_lambda| at least
    # like exp(-0.9 rate(lambda) delta) with the lambda-dependent far
    # field rate Re sqrt(lambda - sigma) (at the contour midpoint this
    # is below eta' = sqrt(-sigma); see ledger)
    lam = lams[4]
    rate = np.sqrt(lam - (-0.5)).real
    direct = resolvent_direct(front_op2, lam, [i0 + 500, i0 + 1000])
    v1 = abs(direct[i0 - 500, 0, 0, 0])
    v2 = abs(direct[i0 - 1000, 0, 1, 0])
    delta = 2 * (grid.x[i0 + 1000] - grid.x[i0 + 500])
    assert v2 / v1 <= np.exp(-0.9 * rate * delta)

from __future__ import annotations

import numpy as np
import pytest

from frontstab.green import (
    build_contour,
    compute_green_field,
    cutoff_chi,
    cutoff_chi_prime,
    decompose_first,
    decompose_second,
    discrete_zero_pair,
    green_apply,
    green_evolve,
    green_kernel,
    kernel_operator,
    refine_contour,
    spreading_factor,
)
from frontstab.numerics import trapezoid_weights
from frontstab.spectral import DiscretizedOperator


@pytest.fixture(scope="module")
def front_contour(spectral_data):
    return build_contour(spectral_data.eta, kappa=1.0, t_min=0.5, t_max=12.0)


def test_cutoff_plateaus_and_midpoint():
    assert cutoff_chi(0.5) == 0.0
    assert cutoff_chi(1.0) == 0.0
    assert cutoff_chi(3.0) == 1.0
    assert cutoff_chi(1.5) == pytest.approx(0.5)
    assert cutoff_chi_prime(0.9) == 0.0
    assert cutoff_chi_prime(2.1) == 0.0
    assert cutoff_chi_prime(1.5) > 0.0
    # C^1 joins
    eps = 1e-6
    assert cutoff_chi(1.0 + eps) < 1e-15
    assert 1.0 - cutoff_chi(2.0 - eps) < 1e-15


def test_constant_coefficient_reconstruction(flat_profile):
    op = kernel_operator(flat_profile)
    contour = build_contour(0.375, kappa=1.0, t_min=0.5, t_max=5.0)
    grid = flat_profile.grid
    i0 = grid.N // 2
    x_idx = np.array([i0 - 200, i0 - 50, i0, i0 + 100, i0 + 300])
    ts = np.array([0.5, 1.0, 2.0, 5.0])
    G = green_kernel(op, None, contour, ts, x_idx, np.array([i0]))
    for k, t in enumerate(ts):
        exact = np.exp(-(grid.x[x_idx]) ** 2 / (4 * t) - t) / np.sqrt(4 * np.pi * t)
        assert np.max(np.abs(G[k, :, 0] - exact)) < 1e-4
    # frozen spec value at (x, t, y) = (0, 1, 0)
    assert G[1, 2, 0] == pytest.approx(np.exp(-1.0) / np.sqrt(4 * np.pi), abs=1e-4)
    assert G[1, 2, 0] == pytest.approx(0.103777, abs=1e-4)


def test_reconstruction_vs_evolution_oracle(front, spectral_data, kernel_op,
                                            kernel_pole, front_contour):
    grid = front.grid
    i0 = grid.N // 2
    x_idx = i0 + np.array([-400, -150, 0, 200, 500])
    y_idx = i0 + np.array([-300, 0, 250])
    ts = np.array([0.5, 2.0, 5.0])
    G = green_kernel(kernel_op, kernel_pole, front_contour, ts, x_idx, y_idx)
    for c, j in enumerate(y_idx):
        Ge = green_evolve(kernel_op, ts, j, delta_width=3 * grid.h)
        for k in range(ts.size):
            rel = np.abs(G[k, :, c] - Ge[k][x_idx]).max() / np.abs(Ge[k][x_idx]).max()
            assert rel < 1e-3


def test_evolution_initial_mass(kernel_op, front):
    grid = front.grid
    w = trapezoid_weights(grid)
    width = 3 * grid.h
    prof = np.exp(-((grid.x - grid.x[1500]) ** 2) / (2.0 * width**2))
    prof /= float((w * prof).sum())
    assert float((w * prof).sum()) == pytest.approx(1.0, abs=1e-10)


def test_semigroup_on_translational_mode(front, kernel_op, kernel_pole, front_contour):
    # e^{Lt} ubar' = ubar' (the kernel preserves the zero mode)
    ubar_p = front.u_bar_prime[:, 0]
    out = green_apply(kernel_op, kernel_pole, front_contour, ubar_p,
                      np.array([0.5, 2.0, 5.0]))
    for k in range(3):
        rel = np.abs(out[k] - ubar_p).max() / np.abs(ubar_p).max()
        assert rel < 1e-3


def test_semigroup_composition(front, kernel_op, kernel_pole, front_contour):
    g = np.exp(-front.grid.x**2 / 10.0)
    t1, t2 = 1.2, 2.3
    once = green_apply(kernel_op, kernel_pole, front_contour, g, np.array([t1 + t2]))[0]
    step1 = green_apply(kernel_op, kernel_pole, front_contour, g, np.array([t1]))[0]
    twice = green_apply(kernel_op, kernel_pole, front_contour, step1, np.array([t2]))[0]
    assert np.abs(twice - once).max() / np.abs(once).max() < 5e-3


def test_contour_refinement_stability(front, kernel_op, kernel_pole, front_contour):
    grid = front.grid
    i0 = grid.N // 2
    x_idx = i0 + np.array([-300, 0, 400])
    y_idx = np.array([i0])
    ts = np.array([0.5, 3.0])
    G1 = green_kernel(kernel_op, kernel_pole, front_contour, ts, x_idx, y_idx)
    G2 = green_kernel(kernel_op, kernel_pole, refine_contour(front_contour),
                      ts, x_idx, y_idx)
    assert np.abs(G1 - G2).max() < 1e-6


def test_first_decomposition(front, spectral_data, green_field_box):
    fld = green_field_box
    # identities hold exactly by construction
    assert np.abs(fld.G - fld.E - fld.G_tilde).max() == 0.0
    assert np.abs(fld.G - fld.F - fld.H_tilde).max() == 0.0
    # E vanishes before the cutoff
    early = fld.t_values <= 1.0
    assert np.abs(fld.E[early]).max() == 0.0
    assert np.abs(fld.F[early]).max() == 0.0


def test_gtilde_small_against_E_late(front, spectral_data, kernel_op,
                                     kernel_pole):
    # at t = 10 near the center the projection part dominates
    contour = build_contour(spectral_data.eta, kappa=1.0, t_min=5.0, t_max=12.0)
    i0 = front.grid.N // 2
    G = green_kernel(kernel_op, kernel_pole, contour, np.array([10.0]),
                     np.array([i0]), np.array([i0]))
    E_val = front.u_bar_prime[i0, 0] * spectral_data.psi_tilde[i0, 0]
    g_tilde = G[0, 0, 0] - E_val
    assert abs(g_tilde) <= 1e-3 * abs(E_val)


def test_gtilde_annihilates_translational_mode(front, spectral_data, kernel_op,
                                               kernel_pole, front_contour, grid):
    # int Gtilde(x,t;y) ubar'(y) dy ~ 0 for t >= 2
    w = trapezoid_weights(grid)
    ubar_p = front.u_bar_prime[:, 0]
    psi = spectral_data.psi_tilde[:, 0]
    out = green_apply(kernel_op, kernel_pole, front_contour, ubar_p, np.array([2.0, 6.0]))
    pair = float((w * psi * ubar_p).sum())
    for k, t in enumerate((2.0, 6.0)):
        gt = out[k] - cutoff_chi(t) * ubar_p * pair
        assert np.abs(gt).max() / np.abs(ubar_p).max() < 1e-3


def test_second_decomposition_limits(front, spectral_data):
    # F -> E pointwise as t -> infinity (errfn factors -> 1, 0)
    grid = front.grid
    x = grid.x[np.array([1300, 1500, 1700])]
    y = grid.x[np.array([1450, 1550])]
    G = np.zeros((1, 3, 2))
    E, _ = decompose_first(G, [50.0], x, y, front, spectral_data.psi_tilde)
    F, _ = decompose_second(G, [50.0], x, y, front, spectral_data.psi_tilde)
    assert np.abs(F - E).max() <= 1e-6 * np.abs(E).max()


def test_spreading_factor_edge():
    # x - y = -t: errfn(0) - errfn(-sqrt(t)) = 1/2 - errfn(-sqrt(t)) -> 1/2
    for t in (1.0, 4.0, 25.0):
        val = spreading_factor(np.array([-t]), t, np.array([0.0]), M=4.0)[0, 0]
        from frontstab.numerics import errfn

        assert val == pytest.approx(0.5 - errfn(-np.sqrt(t)), abs=1e-14)
    assert spreading_factor(np.array([-25.0]), 25.0, np.array([0.0]), M=4.0)[0, 0] \
        == pytest.approx(0.5, abs=1e-6)


def test_approximate_identity_small_time(front, kernel_op, kernel_pole):
    # t -> 0+: the kernel acts as an approximate identity; cross-checked
    # against the evolution oracle at the same instant
    contour = build_contour(0.375, kappa=1.0, t_min=0.05, t_max=1.0)
    g = np.exp(-front.grid.x**2 / 18.0)
    out = green_apply(kernel_op, kernel_pole, contour, g, np.array([0.05]))[0]
    assert np.abs(out - g).max() / np.abs(g).max() < 0.02
    from frontstab.green import _cn_march

    ev = _cn_march(kernel_op, g, np.array([0.05]), 2e-4)[0]
    assert np.abs(out - ev).max() / np.abs(g).max() < 1e-3


def test_pole_pair_consistency(kernel_pole, front, grid):
    lam0, phi, psi = kernel_pole
    w = trapezoid_weights(grid)
    assert abs(lam0) < 1e-5  # 2nd-order operator: zero eig is O(h^2)
    assert float((w * psi * phi).sum()) == pytest.approx(1.0, abs=1e-12)
    rel = np.abs(phi - front.u_bar_prime[:, 0]).max() / np.abs(phi).max()
    assert rel < 1e-3


def test_contour_geometry(front_contour, spectral_data):
    eta = spectral_data.eta
    nodes = front_contour.nodes
    # endpoints of the vertical segment at -eta/2 +- i kappa
    seg = nodes[np.abs(nodes.real + eta / 2.0) < 1e-12]
    assert np.max(np.abs(seg.imag)) <= front_contour.kappa
    # all nodes satisfy the sector consistency Re <= -eta/4 + theta2 |Im|
    assert np.all(nodes.real <= -eta / 4.0 + front_contour.theta2 * np.abs(nodes.imag) + 1e-12)
    # conjugate symmetry of the node multiset
    conj_sorted = np.sort_complex(np.conj(nodes))
    assert np.allclose(np.sort_complex(nodes), conj_sorted)
    # truncation supports the declared t_min
    assert np.exp(nodes.real.min() * front_contour.t_min) < 1e-11

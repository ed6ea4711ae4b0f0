from __future__ import annotations

import numpy as np
import pytest

from frontstab.numerics import Grid1D
from frontstab.profile import (
    FrontProfile,
    NoConnectionError,
    _fit_tail_rates,
    solve_profile,
    solve_profile_shooting,
    tail_rates,
)
from frontstab.systems import bistable, linear_decay


def closed_form(x):
    return 1.0 / (1.0 + np.exp(x / np.sqrt(2.0)))


def test_front_matches_closed_form(front, grid):
    # the closed form itself satisfies ubar_xx + f(ubar) = 0 identically
    # (verified symbolically: u' = -u(1-u)/sqrt(2), u'' = u(1-u)(1-2u)/2 = -f)
    err = np.max(np.abs(front.component(0) - closed_form(grid.x)))
    assert err < 1e-6
    assert front.residual_sup < 1e-8


def test_front_anchoring(front, grid):
    i0 = int(np.argmin(np.abs(grid.x)))
    assert grid.x[i0] == 0.0
    assert front.component(0)[i0] == pytest.approx(0.5, abs=1e-9)


def test_front_monotone_decreasing(front):
    assert np.all(front.u_bar_prime[:, 0] < 1e-12)
    interior = front.u_bar_prime[100:-100, 0]
    assert np.all(interior < 0)


def test_tail_rates_bistable(front):
    rm, rp = tail_rates(front)
    target = 1.0 / np.sqrt(2.0)
    assert abs(rm - target) / target < 0.02
    assert abs(rp - target) / target < 0.02


def test_tail_rates_synthetic(grid):
    class Flat:
        u_minus = np.array([0.0])
        u_plus = np.array([0.0])

    U = np.exp(-2.0 * np.abs(grid.x))[:, None]
    (rm, _), (rp, _) = _fit_tail_rates(Flat, grid, U)
    assert abs(rm - 2.0) / 2.0 < 0.01
    assert abs(rp - 2.0) / 2.0 < 0.01


def test_profile_derivative_values(front, grid):
    i0 = int(np.argmin(np.abs(grid.x)))
    target = -1.0 / (4.0 * np.sqrt(2.0))
    assert front.u_bar_prime[i0, 0] == pytest.approx(target, abs=1e-4)
    assert abs(front.u_bar_prime[0, 0]) < 1e-6
    assert abs(front.u_bar_prime[-1, 0]) < 1e-6


def test_no_connection_for_linear_system(grid):
    with pytest.raises(NoConnectionError):
        solve_profile(linear_decay(1.0), grid)


def test_shooting_cross_check(grid, bistable_system, front):
    u_shoot = solve_profile_shooting(bistable_system, grid)
    assert np.max(np.abs(u_shoot - front.component(0))) < 1e-6


def test_residual_refinement_order(bistable_system):
    # 4th-order scheme: residual of the coarse solution, measured on the

    # fine operator, drops ~16x per halving; check via closed-form error
    errs = []
    for N in (751, 1501):
        g = Grid1D(-30.0, 30.0, N)
        p = solve_profile(bistable_system, g, tol=1e-12)
        errs.append(np.max(np.abs(p.component(0) - closed_form(g.x))))
    ratio = errs[0] / errs[1]
    assert 10.0 < ratio < 24.0


def test_translation_gauge(front, grid, bistable_system):
    # shifting the sampled profile reproduces ubar(x - delta) within
    # interpolation error
    delta = 0.3
    shifted = front.shifted(delta)
    target = closed_form(grid.x - delta)
    sel = np.abs(grid.x) < 25
    assert np.max(np.abs(shifted[sel, 0] - target[sel])) < 1e-6

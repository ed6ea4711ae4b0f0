from __future__ import annotations

import numpy as np
import pytest

from frontstab.numerics import Grid1D
from frontstab.profile import FrontProfile, solve_profile
from frontstab.spectral import assemble_linearization, check_spectral_assumption
from frontstab.systems import bistable, end_state_spectrum, linear_decay

DEFAULT_GRID = Grid1D(-30.0, 30.0, 3001)


@pytest.fixture(scope="session")
def grid():
    return DEFAULT_GRID


@pytest.fixture(scope="session")
def bistable_system():
    return bistable()


@pytest.fixture(scope="session")
def front(bistable_system, grid):
    return solve_profile(bistable_system, grid, tol=1e-11)


@pytest.fixture(scope="session")
def operator(front):
    return assemble_linearization(front)


@pytest.fixture(scope="session")
def spectral_data(operator, front):
    return check_spectral_assumption(operator, front)


@pytest.fixture(scope="session")
def linear_system():
    return linear_decay(1.0)


@pytest.fixture(scope="session")
def flat_profile(linear_system, grid):
    """Constant zero 'profile' of the linear system: the constant
    coefficient oracle for kernel machinery (no front exists)."""
    N = grid.N
    zeros = np.zeros((N, 1))
    return FrontProfile(grid=grid, system=linear_system, u_bar=zeros.copy(),
                        u_bar_prime=zeros.copy(), residual_sup=0.0,
                        tail_rate_minus=1.0, tail_rate_plus=1.0,
                        tail_amp_minus=0.0, tail_amp_plus=0.0, fd_order=4)


@pytest.fixture(scope="session")
def linear_end_spectrum(linear_system):
    return end_state_spectrum(linear_system)


@pytest.fixture(scope="session")
def kernel_op(front):
    from frontstab.green import kernel_operator

    return kernel_operator(front)


@pytest.fixture(scope="session")
def kernel_pole(kernel_op, front):
    from frontstab.green import discrete_zero_pair

    return discrete_zero_pair(kernel_op, front)


@pytest.fixture(scope="session")
def green_field_box(front, spectral_data, kernel_op, kernel_pole):
    """Medium (t, x, y) sample box with y-derivatives, reused by the
    decomposition and bound-fit tests."""
    from frontstab.green import compute_green_field

    t_values = np.array([0.1, 0.2, 0.4, 0.8, 1.5, 2.5, 4.0, 6.0, 8.0])
    x_idx = np.arange(300, 2701, 40)
    y_idx = np.array([1050, 1200, 1350, 1500, 1650, 1800, 1950])
    return compute_green_field(front, spectral_data, t_values, x_idx, y_idx,
                               with_y_derivative=True, op=kernel_op,
                               pole=kernel_pole)

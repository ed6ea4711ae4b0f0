from __future__ import annotations

import numpy as np
import pytest

from frontstab.systems import (
    ReactionSystem,
    UnstableEndStateError,
    bistable,
    end_state_spectrum,
    eval_jacobian,
    eval_reaction,
    linear_decay,
    polynomial_system,
)

RNG = np.random.default_rng(7)


def test_bistable_rest_points():
    sys_ = bistable()
    for u, val in [(0.0, 0.0), (1.0, 0.0), (0.5, 0.0)]:
        assert eval_reaction(sys_, [u])[0] == pytest.approx(val, abs=1e-15)
    sys_.check_rest_points()
    assert np.max(np.abs(eval_reaction(sys_, sys_.u_minus))) < 1e-12
    assert np.max(np.abs(eval_reaction(sys_, sys_.u_plus))) < 1e-12


def test_bistable_jacobian_values():
    sys_ = bistable()
    assert eval_jacobian(sys_, [0.0])[0, 0] == pytest.approx(-0.5)
    assert eval_jacobian(sys_, [1.0])[0, 0] == pytest.approx(-0.5)
    assert eval_jacobian(sys_, [0.5])[0, 0] == pytest.approx(0.25)


def test_nonfinite_input_rejected():
    sys_ = bistable()
    with pytest.raises(ValueError):
        eval_reaction(sys_, [np.nan])
    with pytest.raises(ValueError):
        eval_jacobian(sys_, [np.inf])


def test_finite_difference_jacobian_agreement():
    # drop the analytic Jacobian and compare the FD fallback at random
    # states in the hull of the end states
    ref = bistable()
    no_jac = ReactionSystem(name="bistable-fd", n=1, f=ref.f, jac=None,
                            u_minus=[1.0], u_plus=[0.0])
    for u in RNG.uniform(0.0, 1.0, size=10):
        J_exact = eval_jacobian(ref, [u])[0, 0]
        J_fd = eval_jacobian(no_jac, [u])[0, 0]
        assert abs(J_fd - J_exact) < 1e-6 * max(1.0, abs(J_exact))


def test_end_state_spectrum_bistable():
    spec = end_state_spectrum(bistable())
    assert spec.sigma_plus[0] == pytest.approx(-0.5)
    assert spec.sigma_minus[0] == pytest.approx(-0.5)
    assert spec.gamma_plus[0] == pytest.approx(np.sqrt(0.5))
    assert spec.eta_prime == pytest.approx(np.sqrt(0.5), abs=1e-14)
    # (gamma)^2 = -sigma to machine roundoff
    for g, s in [(spec.gamma_plus, spec.sigma_plus), (spec.gamma_minus, spec.sigma_minus)]:
        assert np.max(np.abs(g**2 + s)) < 1e-15


def test_end_state_spectrum_linear():
    spec = end_state_spectrum(linear_decay(1.0))
    assert spec.sigma_plus[0] == pytest.approx(-1.0)
    assert spec.eta_prime == pytest.approx(1.0)


def test_unstable_end_state_rejected():
    grow = ReactionSystem(name="unstable", n=1, f=lambda u: u,
                          jac=lambda u: np.array([[1.0]]),
                          u_minus=[0.0], u_plus=[0.0])
    with pytest.raises(UnstableEndStateError):
        end_state_spectrum(grow)


def test_polynomial_system_roundtrip():
    # scalar cubic rebuilt from monomials matches the builtin bistable
    # f(u) = -u^3 + 1.5 u^2 - 0.5 u
    poly = polynomial_system(
        "cubic", [[(-1.0, (3,)), (1.5, (2,)), (-0.5, (1,))]],
        u_minus=[1.0], u_plus=[0.0])
    ref = bistable()
    for u in RNG.uniform(-0.5, 1.5, size=20):
        assert eval_reaction(poly, [u])[0] == pytest.approx(eval_reaction(ref, [u])[0], abs=1e-13)
        assert eval_jacobian(poly, [u])[0, 0] == pytest.approx(eval_jacobian(ref, [u])[0, 0], abs=1e-13)


def test_polynomial_system_coupled_jacobian():
    # two-component system with cross terms, Jacobian vs FD fallback
    poly = polynomial_system(
        "coupled",
        [[(-1.0, (1, 0)), (0.3, (1, 1))], [(-2.0, (0, 1)), (-0.1, (2, 0))]],
        u_minus=[0.0, 0.0], u_plus=[0.0, 0.0])
    fd = ReactionSystem(name="coupled-fd", n=2, f=poly.f, jac=None,
                        u_minus=[0.0, 0.0], u_plus=[0.0, 0.0])
    for _ in range(5):
        u = RNG.uniform(-1, 1, size=2)
        assert np.allclose(eval_jacobian(poly, u), eval_jacobian(fd, u), atol=1e-7)

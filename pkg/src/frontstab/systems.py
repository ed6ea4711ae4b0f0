"""Reaction-diffusion systems u_t = u_xx + f(u): the nonlinearity, its
Jacobian, the end states and their spectra.

Built-in systems:

* ``bistable``     -- scalar cubic f(u) = u(1-u)(u-1/2); the balanced root
  makes the connecting front stationary and gives it the closed form
  1/(1 + exp(x/sqrt(2))), which the tests use as an oracle.
* ``linear``       -- scalar f(u) = -c u; no front, but the resolvent and
  heat kernels are classical, so it serves as the constant-coefficient
  oracle for the kernel machinery.
* polynomial systems parsed from config coefficient arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EQUILIBRIUM_TOL = 1e-12
STABILITY_EPS = 1e-8  # margin for "strictly negative real part"

__all__ = [
    "ReactionSystem",
    "EndStateSpectrum",
    "UnstableEndStateError",
    "bistable",
    "linear_decay",
    "polynomial_system",
    "eval_reaction",
    "eval_jacobian",
    "end_state_spectrum",
]


class UnstableEndStateError(RuntimeError):
    """Raised when an end state of the reaction ODE is not strictly stable."""


def _as_state(u, n):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (n,):
        raise ValueError(f"state must have shape ({n},), got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("state must be finite")
    return u


@dataclass(frozen=True, eq=False)
class ReactionSystem:
    """A reaction term f on R^n together with its end states.

    ``jac`` may be None, in which case a centered finite-difference
    Jacobian with step eps^(1/3) * max(1, |u|) is used.  ``f_batch`` and
    ``jac_batch`` are optional vectorized evaluators over (N, n) sample
    stacks; the solvers fall back to row-wise loops without them.
    """

    name: str
    n: int
    f: callable
    jac: callable = None
    u_minus: np.ndarray = None
    u_plus: np.ndarray = None
    f_batch: callable = None
    jac_batch: callable = None

    def __post_init__(self):
        for attr in ("u_minus", "u_plus"):
            val = getattr(self, attr)
            if val is None:
                raise ValueError(f"{attr} is required")
            object.__setattr__(self, attr, _as_state(val, self.n))

    def check_rest_points(self, tol=EQUILIBRIUM_TOL):
        for u in (self.u_minus, self.u_plus):
            r = np.max(np.abs(eval_reaction(self, u)))
            if r > tol:
                raise ValueError(
                    f"end state {u} of '{self.name}' is not a rest point (|f| = {r:.3g})"
                )


@dataclass(frozen=True, eq=False)
class EndStateSpectrum:
    """Eigenvalues sigma of Df at the end states, their eigenvectors
    (columns of R_*), and the spatial rates gamma = sqrt(-sigma) they
    induce at lambda = 0."""

    sigma_minus: np.ndarray
    sigma_plus: np.ndarray
    R_minus: np.ndarray = None
    R_plus: np.ndarray = None
    gamma_minus: np.ndarray = field(init=False)
    gamma_plus: np.ndarray = field(init=False)
    eta_prime: float = field(init=False)

    def __post_init__(self):
        for side in ("minus", "plus"):
            sigma = np.asarray(getattr(self, f"sigma_{side}"), dtype=complex)
            object.__setattr__(self, f"sigma_{side}", sigma)
            object.__setattr__(self, f"gamma_{side}", np.sqrt(-sigma))
            if getattr(self, f"R_{side}") is None:
                object.__setattr__(self, f"R_{side}", np.eye(sigma.size, dtype=complex))
        eta_prime = min(self.gamma_minus.real.min(), self.gamma_plus.real.min())
        object.__setattr__(self, "eta_prime", float(eta_prime))

    @property
    def essential_edge(self) -> float:
        """max Re sigma over both end states (right edge of the essential
        spectrum of the linearized operator)."""
        return float(max(self.sigma_minus.real.max(), self.sigma_plus.real.max()))


def eval_reaction(sys: ReactionSystem, u) -> np.ndarray:
    """Evaluate f(u)."""
    u = _as_state(u, sys.n)
    return np.atleast_1d(np.asarray(sys.f(u), dtype=float))


def reaction_samples(sys: ReactionSystem, U) -> np.ndarray:
    """f evaluated on a stack of states, shape (N, n) -> (N, n)."""
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if sys.f_batch is not None:
        return np.asarray(sys.f_batch(U), dtype=float).reshape(U.shape)
    return np.array([eval_reaction(sys, row) for row in U])


def jacobian_samples(sys: ReactionSystem, U) -> np.ndarray:
    """Df evaluated on a stack of states, shape (N, n) -> (N, n, n)."""
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if sys.jac_batch is not None:
        return np.asarray(sys.jac_batch(U), dtype=float).reshape(U.shape[0], sys.n, sys.n)
    return np.array([eval_jacobian(sys, row) for row in U])


def eval_jacobian(sys: ReactionSystem, u) -> np.ndarray:
    """Evaluate Df(u), falling back to centered finite differences when
    no analytic Jacobian was supplied."""
    u = _as_state(u, sys.n)
    if sys.jac is not None:
        J = np.asarray(sys.jac(u), dtype=float)
        return J.reshape(sys.n, sys.n)
    h = np.finfo(float).eps ** (1.0 / 3.0) * max(1.0, float(np.max(np.abs(u))))
    J = np.empty((sys.n, sys.n))
    for j in range(sys.n):
        e = np.zeros(sys.n)
        e[j] = h
        J[:, j] = (eval_reaction(sys, u + e) - eval_reaction(sys, u - e)) / (2 * h)
    return J


def end_state_spectrum(sys: ReactionSystem, eps_stab=STABILITY_EPS) -> EndStateSpectrum:
    """Eigenvalues of Df(u+-) and the induced spatial decay rates.

    Fails when any eigenvalue has Re >= -eps_stab: the construction
    requires both end states to be strictly stable rest points of the
    reaction ODE.
    """
    sys.check_rest_points()
    sigmas, rvecs = [], []
    for u in (sys.u_minus, sys.u_plus):
        sigma, R = np.linalg.eig(eval_jacobian(sys, u))
        if np.any(sigma.real >= -eps_stab):
            raise UnstableEndStateError(
                f"end state {u} of '{sys.name}' has spectrum {sigma} not "
                f"strictly in the left half-plane"
            )
        order = np.argsort(sigma)
        sigmas.append(sigma[order])
        rvecs.append(R[:, order])
    return EndStateSpectrum(sigma_minus=sigmas[0], sigma_plus=sigmas[1],
                            R_minus=rvecs[0], R_plus=rvecs[1])


# ---------------------------------------------------------------------------
# Built-in systems.
# ---------------------------------------------------------------------------

def bistable() -> ReactionSystem:
    """Cubic bistable f(u) = u(1-u)(u-1/2) with front from u- = 1 to u+ = 0.

    The balanced root a = 1/2 makes the front stationary:
    ubar(x) = 1/(1 + exp(x/sqrt(2))).
    """
    def f(u):
        return u * (1.0 - u) * (u - 0.5)

    def jac(u):
        return np.array([[-3.0 * u[0] ** 2 + 3.0 * u[0] - 0.5]])

    def f_batch(U):
        u = U[:, 0]
        return (u * (1.0 - u) * (u - 0.5))[:, None]

    def jac_batch(U):
        u = U[:, 0]
        return (-3.0 * u**2 + 3.0 * u - 0.5)[:, None, None]

    return ReactionSystem(name="bistable", n=1, f=f, jac=jac, u_minus=[1.0],
                          u_plus=[0.0], f_batch=f_batch, jac_batch=jac_batch)


def linear_decay(c=1.0) -> ReactionSystem:
    """Scalar f(u) = -c u (constant-coefficient oracle; no front)."""
    if not c > 0:
        raise ValueError("decay rate c must be positive")

    def f(u):
        return -c * u

    def jac(u):
        return np.array([[-c]])

    return ReactionSystem(name=f"linear(c={c:g})", n=1, f=f, jac=jac,
                          u_minus=[0.0], u_plus=[0.0],
                          f_batch=lambda U: -c * U,
                          jac_batch=lambda U: np.full((U.shape[0], 1, 1), -c))


def polynomial_system(name, coeffs, u_minus, u_plus) -> ReactionSystem:
    """System whose component i is the polynomial
    f_i(u) = sum_k coeffs[i][k] * prod_j u_j^(powers[i][k][j]).

    ``coeffs`` is a list (one entry per component) of (coefficient,
    powers) pairs, powers being an n-tuple of nonnegative integers.
    The Jacobian is assembled analytically from the monomials.
    """
    n = len(coeffs)
    terms = []
    for comp in coeffs:
        comp_terms = []
        for c, powers in comp:
            powers = tuple(int(p) for p in powers)
            if len(powers) != n or any(p < 0 for p in powers):
                raise ValueError(f"bad monomial powers {powers}")
            comp_terms.append((float(c), powers))
        terms.append(comp_terms)

    def f(u):
        out = np.zeros(n)
        for i, comp_terms in enumerate(terms):
            for c, powers in comp_terms:
                out[i] += c * np.prod([u[j] ** p for j, p in enumerate(powers)])
        return out

    def jac(u):
        J = np.zeros((n, n))
        for i, comp_terms in enumerate(terms):
            for c, powers in comp_terms:
                for j, p in enumerate(powers):
                    if p == 0:
                        continue
                    dterm = c * p * u[j] ** (p - 1)
                    for k, q in enumerate(powers):
                        if k != j:
                            dterm *= u[k] ** q
                    J[i, j] += dterm
        return J

    def f_batch(U):
        out = np.zeros_like(U)
        for i, comp_terms in enumerate(terms):
            for c, powers in comp_terms:
                mono = np.full(U.shape[0], c)
                for j, p in enumerate(powers):
                    if p:
                        mono = mono * U[:, j] ** p
                out[:, i] += mono
        return out

    def jac_batch(U):
        J = np.zeros((U.shape[0], n, n))
        for i, comp_terms in enumerate(terms):
            for c, powers in comp_terms:
                for j, p in enumerate(powers):
                    if p == 0:
                        continue
                    dterm = np.full(U.shape[0], c * p)
                    dterm = dterm * U[:, j] ** (p - 1)
                    for k, q in enumerate(powers):
                        if k != j and q:
                            dterm = dterm * U[:, k] ** q
                    J[:, i, j] += dterm
        return J

    return ReactionSystem(name=name, n=n, f=f, jac=jac, u_minus=u_minus,
                          u_plus=u_plus, f_batch=f_batch, jac_batch=jac_batch)

"""Discretization of the linearized operator L v = v_xx + Df(ubar) v,
verification of the spectral assumption (simple zero eigenvalue, gap to
the rest of the spectrum), the adjoint zero mode and the asymptotic
spatial exponents of the far-field systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eig_banded, eigvals_banded, solve_banded

from .numerics import Grid1D, trapezoid_weights
from .profile import FrontProfile
from .systems import EndStateSpectrum, eval_jacobian

__all__ = [
    "DiscretizedOperator",
    "SpectralData",
    "ModeData",
    "AssumptionViolatedError",
    "ResolutionInsufficientError",
    "NormalizationDegenerateError",
    "BranchDegenerateError",
    "assemble_linearization",
    "check_spectral_assumption",
    "adjoint_zero_mode",
    "decay_exponents",
]


class AssumptionViolatedError(RuntimeError):
    """Spectrum fails the gap assumption (unstable or non-simple zero)."""


class ResolutionInsufficientError(RuntimeError):
    """The discrete zero eigenvalue is not resolved to the requested tolerance."""


class NormalizationDegenerateError(RuntimeError):
    """<psi_tilde, ubar'> is numerically zero, contradicting simplicity."""


class BranchDegenerateError(RuntimeError):
    """lambda hits a branch point of the spatial exponents (radicand zero)."""


def _dxx_stencil(grid: Grid1D, order: int):
    """Stencil coefficients (per offset) of the discrete d_xx with
    ghost-zero Dirichlet closure.

    order=2 is the centered three-point stencil; order=4 is the
    five-point stencil obtained as D2 - (h^2/12) D2 @ D2, which keeps
    the operator symmetric and defines the near-boundary rows
    consistently with the same ghost-zero closure.

    Returns (offsets, coeffs) with coeffs of shape (len(offsets), N):
    coeffs[k, i] multiplies v[i + offsets[k]] in row i (zero where the
    neighbor falls outside the grid).
    """
    N, h2 = grid.N, grid.h ** 2
    if order == 2:
        offsets = (-1, 0, 1)
        coeffs = np.zeros((3, N))
        coeffs[0, 1:] = 1.0 / h2
        coeffs[1, :] = -2.0 / h2
        coeffs[2, :-1] = 1.0 / h2
        return offsets, coeffs
    if order == 4:
        offsets = (-2, -1, 0, 1, 2)
        coeffs = np.zeros((5, N))
        coeffs[0, 2:] = -1.0 / (12 * h2)
        coeffs[1, 1:] = 16.0 / (12 * h2)
        coeffs[2, :] = -30.0 / (12 * h2)
        coeffs[2, 0] = coeffs[2, -1] = -29.0 / (12 * h2)
        coeffs[3, :-1] = 16.0 / (12 * h2)
        coeffs[4, :-2] = -1.0 / (12 * h2)
        return offsets, coeffs
    raise ValueError("stencil order must be 2 or 4")


@dataclass(eq=False)
class DiscretizedOperator:
    """Banded finite-difference form of L = d_xx + Df(ubar(x)) with
    homogeneous Dirichlet closure, node-major interleaved layout.

    The default diffusion stencil is fourth order (see _dxx_stencil);
    the second-order variant is kept for convergence studies.
    """

    grid: Grid1D
    n: int
    potential: np.ndarray  # (N, n, n) samples of Df(ubar(x_i))
    stencil_order: int = 4

    @property
    def size(self):
        return self.grid.N * self.n

    @property
    def bandwidth(self):
        reach = 2 if self.stencil_order == 4 else 1
        return reach * self.n + (self.n - 1)

    def apply(self, v):
        """L v for v of shape (N, n) (or (N,) when scalar)."""
        v = np.asarray(v)
        squeeze = v.ndim == 1
        V = v[:, None] if squeeze else v
        offsets, coeffs = _dxx_stencil(self.grid, self.stencil_order)
        out = np.zeros_like(V, dtype=np.result_type(V, float))
        N = self.grid.N
        for off, c in zip(offsets, coeffs):
            src = slice(max(0, off), N + min(0, off))
            dst = slice(max(0, -off), N + min(0, -off))
            out[dst] += c[dst, None] * V[src]
        out += np.einsum("nij,nj->ni", self.potential, V)
        return out[:, 0] if squeeze else out

    def _banded_base(self, transpose):
        """Cached ((nl, nu), ab) of L itself (real)."""
        key = "_banded_cache_T" if transpose else "_banded_cache"
        cached = getattr(self, key, None)
        if cached is not None:
            return cached
        N, n = self.grid.N, self.n
        offsets, coeffs = _dxx_stencil(self.grid, self.stencil_order)
        nl = nu = self.bandwidth
        ab = np.zeros((nl + nu + 1, N * n))

        def put(row, col, val):
            ab[nu + row - col, col] += val

        pot = self.potential.transpose(0, 2, 1) if transpose else self.potential
        for i in range(N):
            base = i * n
            for off, c in zip(offsets, coeffs):
                if c[i] == 0.0:
                    continue
                for j in range(n):
                    put(base + j, (i + off) * n + j, c[i])
            for j in range(n):
                for k in range(n):
                    put(base + j, base + k, pot[i, j, k])
        object.__setattr__(self, key, ((nl, nu), ab))
        return (nl, nu), ab

    def banded(self, shift=0.0, transpose=False, dtype=complex):
        """((nl, nu), ab) of (L - shift I) for scipy.linalg.solve_banded."""
        (nl, nu), base = self._banded_base(transpose)
        ab = base.astype(dtype, copy=True)
        if shift != 0.0:
            ab[nu, :] -= shift
        return (nl, nu), ab

    def banded_identity_minus(self, a, dtype=float):
        """((nl, nu), ab) of (I - a L), used by the implicit time steppers."""
        (nl, nu), ab = self.banded(shift=0.0, dtype=dtype)
        ab = -a * ab
        ab[nu, :] += 1.0
        return (nl, nu), ab

    def symmetric_band(self):
        """Upper banded form (u+1, N) of the scalar operator for
        scipy.linalg.eig_banded (requires a scalar, hence symmetric, L)."""
        if self.n != 1:
            raise ValueError("symmetric banded form requires a scalar system")
        offsets, coeffs = _dxx_stencil(self.grid, self.stencil_order)
        u = offsets[-1]
        a_band = np.zeros((u + 1, self.grid.N))
        for off, c in zip(offsets, coeffs):
            if off < 0:
                continue
            a_band[u - off, off:] = c[:self.grid.N - off] if off else c
        a_band[u, :] += self.potential[:, 0, 0]
        return a_band

    def dense(self):
        N, n = self.grid.N, self.n
        offsets, coeffs = _dxx_stencil(self.grid, self.stencil_order)
        A = np.zeros((N * n, N * n))
        eye = np.eye(n)
        for i in range(N):
            b = i * n
            A[b:b + n, b:b + n] += self.potential[i]
            for off, c in zip(offsets, coeffs):
                if 0 <= i + off < N and c[i] != 0.0:
                    A[b:b + n, (i + off) * n:(i + off + 1) * n] += c[i] * eye
        return A


@dataclass(eq=False)
class SpectralData:
    """Outcome of the spectral-assumption check.

    eigenvalues are the computed eigenvalues in the inspected window,
    sorted by descending real part; ``localized`` flags which of them
    correspond to spatially localized eigenfunctions (the delocalized
    ones approximate the essential spectrum of the truncated operator).
    phi equals the sampled ubar' exactly; psi_tilde is the adjoint zero
    mode with trapezoid <psi_tilde, ubar'> = 1.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray  # (N*n, k) eigenvectors for the window
    localized: np.ndarray
    zero_index: int
    zero_eig: float
    phi: np.ndarray
    psi_tilde: np.ndarray
    eta: float
    eta_prime: float
    eta0: float
    essential_edge: float
    end_spectrum: EndStateSpectrum
    grid: Grid1D = None
    lambda1: float = field(default=np.nan)

    def psi_component(self, j=0):
        return self.psi_tilde[:, j]


def assemble_linearization(profile: FrontProfile) -> DiscretizedOperator:
    """Discretization of v_xx + Df(ubar) v on the profile grid."""
    from .systems import jacobian_samples

    sys = profile.system
    pot = jacobian_samples(sys, profile.u_bar)
    return DiscretizedOperator(grid=profile.grid, n=sys.n, potential=pot)


def _participation_outer(vec, grid, n):
    """Fraction of the eigenvector's mass in the outer half of the domain."""
    V = vec.reshape(grid.N, n)
    mass = (np.abs(V) ** 2).sum(axis=1)
    outer = np.abs(grid.x) > 0.5 * max(abs(grid.x_min), abs(grid.x_max))
    total = mass.sum()
    return float(mass[outer].sum() / total) if total > 0 else 1.0


def check_spectral_assumption(op: DiscretizedOperator, profile: FrontProfile,
                              tol=1e-6, eta0_factor=0.9,
                              window_margin=0.5) -> SpectralData:
    """Verify the gap assumption on the discretized operator.

    Scalar systems use the symmetric tridiagonal eigensolver; systems use
    a dense nonsymmetric solve (desk scale only).  Eigenfunctions with
    more than half their mass in the outer half of the domain are
    classified as essential-spectrum approximants; the reported gap eta
    merges the largest localized nonzero eigenvalue with the analytic
    essential-spectrum edge.
    """
    from .systems import UnstableEndStateError, end_state_spectrum

    try:
        end_spec = end_state_spectrum(profile.system)
    except UnstableEndStateError as exc:
        raise AssumptionViolatedError(str(exc)) from exc
    edge = end_spec.essential_edge
    N, n = op.grid.N, op.n

    if n == 1:
        a_band = op.symmetric_band()
        all_eigs = eigvals_banded(a_band, lower=False)
        if np.any(all_eigs > tol):
            raise AssumptionViolatedError(
                f"spectrum reaches Re = {all_eigs.max():.3g} > 0")
        lo = edge - window_margin
        vals, vecs = eig_banded(a_band, lower=False, select="v",
                                select_range=(lo, all_eigs.max() + 1.0))
    else:
        if op.size > 4200:
            raise ValueError("dense eigensolve guard: reduce N for systems")
        import scipy.linalg as sla

        vals_c, vecs_c = sla.eig(op.dense())
        if np.any(vals_c.real > tol):
            raise AssumptionViolatedError(
                f"spectrum reaches Re = {vals_c.real.max():.3g} > 0")
        keep = vals_c.real >= edge - window_margin
        vals, vecs = vals_c[keep].real, vecs_c[:, keep].real
        all_eigs = vals_c.real

    order = np.argsort(-vals)
    vals, vecs = vals[order], vecs[:, order]
    localized = np.array([_participation_outer(vecs[:, k], op.grid, n) < 0.5
                          for k in range(vals.size)])

    loc_idx = np.where(localized)[0]
    if loc_idx.size == 0:
        raise AssumptionViolatedError("no localized eigenvalue found near zero")
    zero_k = loc_idx[np.argmin(np.abs(vals[loc_idx]))]
    zero_eig = float(vals[zero_k])
    if abs(zero_eig) > tol:
        raise ResolutionInsufficientError(
            f"|zero eigenvalue| = {abs(zero_eig):.3g} exceeds tol = {tol:g}")

    others = [k for k in loc_idx if k != zero_k]
    lambda1 = float(vals[others[0]]) if others else -np.inf
    if others and abs(lambda1 - zero_eig) < min(0.5 * abs(edge), 1e-3):
        raise AssumptionViolatedError(
            f"zero eigenvalue is not simple (next localized eigenvalue {lambda1:.3g})")

    eta = float(min(-lambda1, -edge))
    if eta <= 0:
        raise AssumptionViolatedError(f"nonpositive spectral gap eta = {eta:.3g}")

    # zero-mode alignment: phi is the sampled ubar' itself
    phi = profile.u_bar_prime.copy()
    w_vec = vecs[:, zero_k].reshape(N, n)
    cosine = abs(np.vdot(w_vec.ravel(), phi.ravel())) / (
        np.linalg.norm(w_vec) * np.linalg.norm(phi))
    if cosine < 0.999:
        raise AssumptionViolatedError(
            f"zero mode misaligned with ubar' (cosine {cosine:.5f})")

    psi = adjoint_zero_mode(op, profile, zero_eig)
    eta0 = eta0_factor * min(eta / 4.0, end_spec.eta_prime)

    return SpectralData(eigenvalues=vals, modes=vecs, localized=localized,
                        zero_index=int(zero_k), zero_eig=zero_eig, phi=phi,
                        psi_tilde=psi, eta=eta, eta_prime=end_spec.eta_prime,
                        eta0=float(eta0), essential_edge=edge,
                        end_spectrum=end_spec, grid=op.grid, lambda1=lambda1)


def adjoint_zero_mode(op: DiscretizedOperator, profile: FrontProfile,
                      zero_eig=0.0) -> np.ndarray:
    """Zero eigenfunction of the transposed operator, scaled so that the
    trapezoid pairing with ubar' is exactly 1.

    Computed by inverse iteration on (L - lambda_0)^T seeded with ubar'
    (for scalar self-adjoint operators this reproduces
    ubar'/||ubar'||_{L^2}^2).
    """
    N, n = op.grid.N, op.n
    lu, ab = op.banded(shift=zero_eig + 1e-14, transpose=True, dtype=float)
    y = profile.u_bar_prime.ravel().copy()
    y /= np.linalg.norm(y)
    for _ in range(3):
        y = solve_banded(lu, ab, y)
        y /= np.linalg.norm(y)
    psi = y.reshape(N, n)
    w = trapezoid_weights(op.grid)
    pairing = float((w[:, None] * psi * profile.u_bar_prime).sum())
    if abs(pairing) < 1e-12:
        raise NormalizationDegenerateError("<psi_tilde, ubar'> is numerically zero")
    return psi / pairing


@dataclass(frozen=True, eq=False)
class ModeData:
    """Spatial exponents mu and far-field eigenvectors at a given lambda.

    For each end state the 2n exponents split into a decaying half
    (Re mu <= -eta') and a growing half (Re mu >= eta'); columns of V are
    the first-order-system eigenvectors (v, mu v).  gamma and a_lin are
    the leading small-lambda expansion data mu = -gamma - a_lin*lambda + ...
    for the decaying branch.
    """

    lam: complex
    mu_minus: np.ndarray
    mu_plus: np.ndarray
    V_minus: np.ndarray
    V_plus: np.ndarray
    gamma_minus: np.ndarray
    gamma_plus: np.ndarray
    a_minus: np.ndarray
    a_plus: np.ndarray


def decay_exponents(end_spec: EndStateSpectrum, lam, degeneracy_tol=1e-13) -> ModeData:
    """Spatial exponents mu solving mu^2 = lambda - sigma for every
    eigenvalue sigma of Df(u+-), split by sign of the real part.

    Ordering per side: entries 0..n-1 are the decaying exponents
    -sqrt(lambda - sigma_j), entries n..2n-1 the growing partners.
    Raises BranchDegenerateError when the radicand vanishes.
    """
    lam = complex(lam)
    out = {}
    for side in ("minus", "plus"):
        sigma = getattr(end_spec, f"sigma_{side}")
        R = getattr(end_spec, f"R_{side}", None)
        n = sigma.size
        radicand = lam - sigma
        if np.any(np.abs(radicand) < degeneracy_tol):
            raise BranchDegenerateError(
                f"lambda = {lam} hits a branch point (sigma = {sigma})")
        root = np.sqrt(radicand)  # principal branch, Re >= 0
        if np.any(root.real < degeneracy_tol):
            raise BranchDegenerateError(
                f"exponents at lambda = {lam} are not hyperbolically split")
        mu = np.concatenate([-root, root])
        rvecs = R if R is not None else np.eye(n, dtype=complex)
        V = np.zeros((2 * n, 2 * n), dtype=complex)
        for j in range(2 * n):
            v = rvecs[:, j % n]
            V[:n, j] = v
            V[n:, j] = mu[j] * v
        gamma = np.sqrt(-sigma)
        out[side] = (mu, V, gamma, 1.0 / (2.0 * gamma))
    return ModeData(lam=lam,
                    mu_minus=out["minus"][0], mu_plus=out["plus"][0],
                    V_minus=out["minus"][1], V_plus=out["plus"][1],
                    gamma_minus=out["minus"][2], gamma_plus=out["plus"][2],
                    a_minus=out["minus"][3], a_plus=out["plus"][3])

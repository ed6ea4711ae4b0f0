"""Resolvent kernel of the linearization: construction from decaying and
growing mode bases of the first-order eigenvalue system, a direct banded
solve used as oracle, jump-condition checks and the bounded-frequency
decay bound.

Conventions.  The kernel R_lambda produced here is the kernel of
(lambda I - L)^{-1}, the classical sign for which the scalar
constant-coefficient formula reads
R_lambda(x,y) = exp(-sqrt(lambda+c)|x-y|) / (2 sqrt(lambda+c)).
With this sign the jump of the 2x2 derivative block across x = y equals
[[0, I], [-I, 0]].  Mode solutions W = (w, w') solve W' = A W with
A = [[0, I], [lambda I - Df(ubar), 0]]; adjoint row solutions Z = (z, z')
solve Z' = Z Atilde with Atilde = [[0, lambda I - Df(ubar)], [I, 0]],
which is the same system with the transposed potential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .numerics import Grid1D
from .profile import FrontProfile
from .spectral import DiscretizedOperator, decay_exponents
from .systems import EndStateSpectrum

__all__ = [
    "ModeBasis",
    "ResolventAssembly",
    "DegenerateBasisError",
    "integrate_modes",
    "assemble_resolvent",
    "resolvent_direct",
    "verify_resolvent_bound",
]

S_PAIRING = np.array([[0.0, 1.0], [-1.0, 0.0]])  # scalar block of S


class DegenerateBasisError(RuntimeError):
    """Mode matrices became numerically singular (lambda too close to an
    eigenvalue, or overflow was not contained)."""


def _pairing_matrix(n):
    S = np.zeros((2 * n, 2 * n))
    S[:n, n:] = np.eye(n)
    S[n:, :n] = -np.eye(n)
    return S


@dataclass(eq=False)
class _Family:
    """Renormalized samples of one mode family: true value at node i of
    column m is hat[i, :, m] * exp(logs[i, m])."""

    hat: np.ndarray   # (N, 2n, m) complex
    logs: np.ndarray  # (N, m) complex
    valid: np.ndarray  # (N,) bool, nodes where the family was integrated

    def value(self, i):
        return self.hat[i] * np.exp(self.logs[i])[None, :]


@dataclass(eq=False)
class ModeBasis:
    """Decaying/growing primal bases and dual (adjoint) bases at one
    lambda, with duality enforced exactly at x = 0."""

    lam: complex
    grid: Grid1D
    n: int
    families: dict
    i_zero: int
    pairing_residual_minus: float = np.nan
    pairing_residual_plus: float = np.nan
    conservation_drift: float = np.nan

    def family(self, name) -> _Family:
        return self.families[name]


def _potential_splines(profile: FrontProfile):
    """Df(ubar(x)) sampled on nodes and midpoints (cached on the profile)."""
    cache = getattr(profile, "_potential_midpoints", None)
    if cache is not None:
        return cache
    from .systems import jacobian_samples

    grid, sys = profile.grid, profile.system
    n = sys.n
    P_nodes = jacobian_samples(sys, profile.u_bar)
    x_mid = 0.5 * (grid.x[:-1] + grid.x[1:])
    u_mid = np.column_stack([CubicSpline(grid.x, profile.u_bar[:, j])(x_mid)
                             for j in range(n)])
    P_mid = jacobian_samples(sys, u_mid)
    object.__setattr__(profile, "_potential_midpoints", (P_nodes, P_mid))
    return P_nodes, P_mid


def _rk4_march(Q_nodes, Q_mid, W0, log0, idx_path, h, renorm_every=50):
    """March W' = [[0,I],[Q,0]] W along idx_path (consecutive node indices),
    renormalizing columns to unit max-magnitude every renorm_every steps.

    Returns (hat, logs) sampled at every node of the path.
    """
    n2, m = W0.shape
    n = n2 // 2
    steps = len(idx_path) - 1
    hat = np.empty((len(idx_path), n2, m), dtype=complex)
    logs = np.empty((len(idx_path), m), dtype=complex)
    W = W0.astype(complex).copy()
    lg = log0.astype(complex).copy()
    hat[0], logs[0] = W, lg

    def rhs(Q, W):
        out = np.empty_like(W)
        out[:n] = W[n:]
        out[n:] = Q @ W[:n]
        return out

    for s in range(steps):
        i, j = idx_path[s], idx_path[s + 1]
        sign = 1.0 if j > i else -1.0
        dx = sign * h
        Qa = Q_nodes[i]
        Qm = Q_mid[min(i, j)]
        Qb = Q_nodes[j]
        k1 = rhs(Qa, W)
        k2 = rhs(Qm, W + 0.5 * dx * k1)
        k3 = rhs(Qm, W + 0.5 * dx * k2)
        k4 = rhs(Qb, W + dx * k3)
        W = W + dx / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (s + 1) % renorm_every == 0:
            scale = np.max(np.abs(W), axis=0)
            scale[scale == 0] = 1.0
            W = W / scale[None, :]
            lg = lg + np.log(scale)
        hat[s + 1], logs[s + 1] = W, lg
    return hat, logs


def _left_eigvecs(R):
    """Rows l_i with l_i R[:, j] = delta_ij (left eigenvectors when the
    columns of R are right eigenvectors)."""
    return np.linalg.inv(R)


def integrate_modes(profile: FrontProfile, end_spec: EndStateSpectrum, lam,
                    renorm_every=50, cond_limit=1e12) -> ModeBasis:
    """Integrate the primal and dual mode families at spectral parameter
    lambda and Gram-correct the duals so the duality pairing is exactly
    the identity at x = 0.

    Families (m = n columns each; primal values are (w, w'), dual values
    are stored as the transposed rows (z, z')):

    * phi_plus   : decaying at +inf, marched right -> left over the grid
    * phi_minus  : decaying at -inf, marched left -> right over the grid
    * psi_plus   : growing at +inf, marched 0 -> +x_max
    * psi_minus  : growing at -inf, marched 0 -> -x_max
    * phi_tilde_plus, psi_tilde_plus, phi_tilde_minus, psi_tilde_minus :
      adjoint counterparts (psi_tilde_* span the decaying duals and are
      marched over the whole grid; phi_tilde_* from 0 outward).
    """
    md = decay_exponents(end_spec, lam)
    grid, n = profile.grid, profile.system.n
    N, h = grid.N, grid.h
    P_nodes, P_mid = _potential_splines(profile)
    lamI = lam * np.eye(n)
    Q_nodes = lamI[None, :, :] - P_nodes
    Q_mid = lamI[None, :, :] - P_mid
    QT_nodes = np.transpose(Q_nodes, (0, 2, 1))
    QT_mid = np.transpose(Q_mid, (0, 2, 1))
    i0 = int(np.argmin(np.abs(grid.x)))

    fams = {}

    def store(name, idx_path, hat, logs):
        H = np.full((N, 2 * n, hat.shape[2]), np.nan, dtype=complex)
        L = np.full((N, hat.shape[2]), np.nan, dtype=complex)
        H[idx_path] = hat
        L[idx_path] = logs
        valid = np.zeros(N, dtype=bool)
        valid[idx_path] = True
        fams[name] = _Family(hat=H, logs=L, valid=valid)

    def seeds(V, mu, cols, x_seed):
        W0 = V[:, cols]
        log0 = mu[cols] * x_seed
        return W0, log0

    def dual_seeds(end_R, mu, cols, x_seed):
        Lv = _left_eigvecs(end_R)
        Z0 = np.zeros((2 * n, len(cols)), dtype=complex)
        for c, j in enumerate(cols):
            l = Lv[j % n]
            Z0[:n, c] = l
            Z0[n:, c] = -mu[j] * l
        log0 = -mu[cols] * x_seed
        return Z0, log0

    dec = list(range(n))        # decaying exponents -sqrt(lam - sigma)
    gro = list(range(n, 2 * n))  # growing partners

    # primal families
    path_rl = np.arange(N - 1, -1, -1)
    W0, l0 = seeds(md.V_plus, md.mu_plus, dec, grid.x_max)
    store("phi_plus", path_rl, *_rk4_march(Q_nodes, Q_mid, W0, l0, path_rl, h, renorm_every))

    path_lr = np.arange(N)
    W0, l0 = seeds(md.V_minus, md.mu_minus, gro, grid.x_min)
    store("phi_minus", path_lr, *_rk4_march(Q_nodes, Q_mid, W0, l0, path_lr, h, renorm_every))

    path_0l = np.arange(i0, -1, -1)
    W0, l0 = seeds(md.V_minus, md.mu_minus, dec, 0.0)
    store("psi_minus", path_0l, *_rk4_march(Q_nodes, Q_mid, W0, l0, path_0l, h, renorm_every))

    path_0r = np.arange(i0, N)
    W0, l0 = seeds(md.V_plus, md.mu_plus, gro, 0.0)
    store("psi_plus", path_0r, *_rk4_march(Q_nodes, Q_mid, W0, l0, path_0r, h, renorm_every))

    # dual families (transposed system)
    R_minus = np.asarray(end_spec.R_minus, dtype=complex)
    R_plus = np.asarray(end_spec.R_plus, dtype=complex)

    Z0, l0 = dual_seeds(R_minus, md.mu_minus, dec, grid.x_min)
    store("psi_tilde_minus", path_lr, *_rk4_march(QT_nodes, QT_mid, Z0, l0, path_lr, h, renorm_every))

    Z0, l0 = dual_seeds(R_plus, md.mu_plus, gro, grid.x_max)
    store("psi_tilde_plus", path_rl, *_rk4_march(QT_nodes, QT_mid, Z0, l0, path_rl, h, renorm_every))

    Z0, l0 = dual_seeds(R_minus, md.mu_minus, gro, 0.0)
    store("phi_tilde_minus", path_0l, *_rk4_march(QT_nodes, QT_mid, Z0, l0, path_0l, h, renorm_every))

    Z0, l0 = dual_seeds(R_plus, md.mu_plus, dec, 0.0)
    store("phi_tilde_plus", path_0r, *_rk4_march(QT_nodes, QT_mid, Z0, l0, path_0r, h, renorm_every))

    basis = ModeBasis(lam=complex(lam), grid=grid, n=n, families=fams, i_zero=i0)
    _gram_correct(basis, cond_limit)
    return basis


def _family_value(fam: _Family, i):
    return fam.value(i)


def _dual_rows(fam: _Family, i):
    """Dual values as rows (m, 2n): stored transposed column solutions."""
    return fam.value(i).T


def _mix_family(fam: _Family, A, other: _Family = None, B=None):
    """Replace the dual family rows by A @ rows (+ B @ other_rows).

    Column mixing requires a common log normalization per node, so the
    per-column logs are flattened onto max Re log before mixing.
    """
    sel = fam.valid if other is None else (fam.valid & other.valid)
    idx = np.where(sel)[0]
    logs = fam.logs[idx]
    common = logs.real.max(axis=1)
    scaled = fam.hat[idx] * np.exp(logs - common[:, None])[:, None, :]
    mixed = np.einsum("nij,kj->nik", scaled, A)
    if other is not None:
        logs_o = other.logs[idx]
        scaled_o = other.hat[idx] * np.exp(logs_o - common[:, None])[:, None, :]
        mixed = mixed + np.einsum("nij,kj->nik", scaled_o, B)
    fam.hat[idx] = mixed
    fam.logs[idx] = common[:, None]
    fam.valid[:] = False
    fam.valid[idx] = True


def _gram_correct(basis: ModeBasis, cond_limit):
    """Enforce the duality pairing W~_j S W_k = delta_jk at x = 0.

    The correction is applied in class-respecting block-triangular form:
    the decaying duals (psi_tilde_*) are mixed only among themselves (a
    pure gauge change), while the growing duals (phi_tilde_*) may absorb
    decaying duals to cancel their cross pairing.  A full inverse of the
    2n x 2n pairing matrix would add growing-dual components to the
    decaying duals and destroy their far-field decay.
    """
    n, i0 = basis.n, basis.i_zero
    S = _pairing_matrix(n)
    for side in ("minus", "plus"):
        dec_dual = basis.family(f"psi_tilde_{side}")
        gro_dual = basis.family(f"phi_tilde_{side}")
        # duality partners: psi~ pairs with psi (growing primal),
        # phi~ pairs with phi (decaying primal)
        Psi = _family_value(basis.family(f"psi_{side}"), i0)
        Phi = _family_value(basis.family(f"phi_{side}"), i0)

        P_pp = _dual_rows(dec_dual, i0) @ S @ Psi
        if not np.all(np.isfinite(P_pp)) or np.linalg.cond(P_pp) > cond_limit:
            raise DegenerateBasisError(
                f"(psi~ S psi) pairing degenerate on side {side} at lambda={basis.lam}")
        A1 = np.linalg.inv(P_pp)
        _mix_family(dec_dual, A1)

        G1 = _dual_rows(gro_dual, i0) @ S @ Psi
        G2 = _dual_rows(gro_dual, i0) @ S @ Phi
        eps = _dual_rows(dec_dual, i0) @ S @ Phi
        if np.linalg.cond(G2) > cond_limit:
            raise DegenerateBasisError(
                f"(phi~ S phi) pairing degenerate on side {side} at lambda={basis.lam}")
        A2 = np.linalg.inv(G2 - G1 @ eps)
        B2 = -A2 @ G1
        _mix_family(gro_dual, A2, other=dec_dual, B=B2)

        rows = np.vstack([_dual_rows(dec_dual, i0), _dual_rows(gro_dual, i0)])
        primal = np.hstack([Psi, Phi])
        res = np.max(np.abs(rows @ S @ primal - np.eye(2 * n)))
        setattr(basis, f"pairing_residual_{side}", float(res))


def conservation_drift(basis: ModeBasis, name_dual, name_primal, stride=25):
    """Max drift of the (constant in x) pairing Z S W over shared nodes."""
    S = _pairing_matrix(basis.n)
    fd, fp = basis.family(name_dual), basis.family(name_primal)
    shared = np.where(fd.valid & fp.valid)[0][::stride]
    vals = np.array([_dual_rows(fd, i) @ S @ _family_value(fp, i) for i in shared])
    return float(np.max(np.abs(vals - vals[len(vals) // 2])))


@dataclass(eq=False)
class ResolventAssembly:
    """Assembled resolvent kernel at one lambda.

    M_plus/M_minus/d_plus/d_minus are the coefficient matrices of the
    quadrant representations; ``block(i, j)`` evaluates the 2x2 block
    [[R, R_y], [R_x, R_xy]] (each entry n x n) of the (lambda I - L)^{-1}
    kernel at grid nodes x_i, y_j.
    """

    basis: ModeBasis
    M_plus: np.ndarray
    M_minus: np.ndarray
    M_plus_kramer: np.ndarray
    M_minus_dualform: np.ndarray
    d_plus: np.ndarray
    d_minus: np.ndarray

    @property
    def lam(self):
        return self.basis.lam

    def _halfblock(self, i, j, upper):
        b = self.basis
        n = b.n
        if upper:
            W = _family_value(b.family("phi_plus"), i)      # (2n, n)
            Zf = b.family("psi_tilde_minus")
            Z = _dual_rows(Zf, j)                            # (n, 2n)
            return -(W @ self.M_plus @ Z).reshape(2, n, 2, n).transpose(0, 2, 1, 3)
        W = _family_value(b.family("phi_minus"), i)
        Z = _dual_rows(b.family("psi_tilde_plus"), j)
        return (W @ self.M_minus @ Z).reshape(2, n, 2, n).transpose(0, 2, 1, 3)

    def block(self, i, j):
        """2x2 block of kernel derivatives at (x_i, y_j); the x > y branch
        is used on the diagonal."""
        return self._halfblock(i, j, upper=self.basis.grid.x[i] >= self.basis.grid.x[j])

    def kernel(self, i, j):
        """R_lambda(x_i, y_j) as an (n, n) matrix."""
        return self.block(i, j)[0, 0]

    def kernel_row(self, y_index, x_indices):
        """R_lambda(x, y) for one y and many x (scalar systems: 1d array)."""
        vals = np.array([self.kernel(i, y_index) for i in x_indices])
        return vals[:, 0, 0] if self.basis.n == 1 else vals

    def jump_residuals(self, j):
        """Deviation of the block jump at x = y_j from [[0, I], [-I, 0]]."""
        n = self.basis.n
        upper = self._halfblock(j, j, upper=True)
        lower = self._halfblock(j, j, upper=False)
        jump = upper - lower
        target = np.zeros((2, 2, n, n))
        target[0, 1] = np.eye(n)
        target[1, 0] = -np.eye(n)
        return np.abs(jump - target).max(axis=(2, 3))


def assemble_resolvent(basis: ModeBasis) -> ResolventAssembly:
    """Compute M+-, d+- from the mode basis (duality and Kramer's-rule
    forms) and return the kernel evaluator."""
    n, i0 = basis.n, basis.i_zero
    S = _pairing_matrix(n)

    PhiP = _family_value(basis.family("phi_plus"), i0)
    PhiM = _family_value(basis.family("phi_minus"), i0)
    PsiM = _family_value(basis.family("psi_minus"), i0)
    PsiTM = _dual_rows(basis.family("psi_tilde_minus"), i0)
    PsiTP = _dual_rows(basis.family("psi_tilde_plus"), i0)
    PhiTM = _dual_rows(basis.family("phi_tilde_minus"), i0)

    # (Psi~ S Phi) and (Phi+, Phi-) degenerate exactly at eigenvalues of L;
    # away from the spectrum their conditioning is O(10^2) at desk scale,
    # so 1e8 separates cleanly
    pair_plus = PsiTM @ S @ PhiP
    pair_minus = PsiTP @ S @ PhiM
    for name, P in (("plus", pair_plus), ("minus", pair_minus)):
        if np.linalg.cond(P) > 1e8:
            raise DegenerateBasisError(
                f"(Psi~ S Phi) singular on side {name} at lambda={basis.lam}: "
                "lambda is numerically an eigenvalue")
    M_plus = np.linalg.inv(pair_plus)
    M_minus = np.linalg.inv(pair_minus)

    # Kramer's-rule style forms evaluated at x = 0
    big = np.hstack([PhiP, PhiM])  # (2n, 2n)
    if np.linalg.cond(big) > 1e8:
        raise DegenerateBasisError(
            f"(Phi+, Phi-) singular at lambda={basis.lam}: eigenvalue hit")
    coeff = np.linalg.solve(big, PsiM)
    M_plus_kramer = coeff[:n]
    d_plus = -coeff[n:]

    dual_stack = np.vstack([PsiTM, PsiTP])  # (2n, 2n) rows
    inv_dual = np.linalg.inv(dual_stack)
    M_minus_dualform = PhiTM @ inv_dual[:, n:]
    d_minus = PhiTM @ inv_dual[:, :n]

    return ResolventAssembly(basis=basis, M_plus=M_plus, M_minus=M_minus,
                             M_plus_kramer=M_plus_kramer,
                             M_minus_dualform=M_minus_dualform,
                             d_plus=d_plus, d_minus=d_minus)


def quadrant_kernel(assembly: ResolventAssembly, i, j):
    """Kernel value from the four-quadrant representation (bookkeeping
    form with d+-), used to validate the assembly against the master
    two-sided formula.  Returns the (n, n) kernel matrix of the
    (lambda I - L)^{-1} convention."""
    b = assembly.basis
    n = b.n
    x, y = b.grid.x[i], b.grid.x[j]

    def val(fam, k):
        return _family_value(b.family(fam), k)

    def rows(fam, k):
        return _dual_rows(b.family(fam), k)

    if y <= 0 <= x and x >= y:
        K = val("phi_plus", i)[:n] @ assembly.M_plus @ rows("psi_tilde_minus", j)[:, :n]
    elif y <= x <= 0:
        K = (val("phi_minus", i)[:n] @ assembly.d_plus @ rows("psi_tilde_minus", j)[:, :n]
             + val("psi_minus", i)[:n] @ rows("psi_tilde_minus", j)[:, :n])
    elif x <= 0 <= y and x <= y:
        K = -val("phi_minus", i)[:n] @ assembly.M_minus @ rows("psi_tilde_plus", j)[:, :n]
    elif x <= y <= 0:
        K = (val("phi_minus", i)[:n] @ assembly.d_minus @ rows("psi_tilde_minus", j)[:, :n]
             - val("phi_minus", i)[:n] @ rows("phi_tilde_minus", j)[:, :n])
    else:
        raise ValueError("quadrant formulas cover x,y with opposite or negative signs only")
    return -K  # paper convention -> (lambda I - L)^{-1} convention


def resolvent_direct(op: DiscretizedOperator, lam, y_indices):
    """Kernel columns R_lambda(., y_j) of the discretized
    (lambda I - L_h)^{-1} via one banded LU at this lambda.

    y_indices: grid indices of the source points.  Returns array
    (N, n, len(y), n): component a of the response at x_i to a unit
    delta in component b at y_j sits at [i, a, j, b].
    """
    N, n = op.grid.N, op.n
    lu, ab = op.banded(shift=lam, dtype=complex)
    ab = -ab  # (lambda I - L)
    y_indices = np.atleast_1d(y_indices)
    rhs = np.zeros((N * n, len(y_indices) * n), dtype=complex)
    for c, j in enumerate(y_indices):
        for b in range(n):
            rhs[j * n + b, c * n + b] = 1.0 / op.grid.h
    sol = solve_banded(lu, ab, rhs)
    return sol.reshape(N, n, len(y_indices), n)


def verify_resolvent_bound(kernels, x, y, profile: FrontProfile, psi_tilde,
                           lams, eta_prime, zero_eig=0.0, has_pole=True):
    """Fit the minimal C with |Rtilde_lambda(x,y)| <= C exp(-eta'(|x|+|y|))
    over the sampled lambda and (x, y) boxes.

    kernels: list over lams of arrays (len(x), len(y)) with scalar kernel
    samples of (lambda I - L)^{-1}; the rank-one pole term
    ubar'(x) psi~(y) / (lambda - lambda_0) is removed before fitting.
    Returns (C, sup_location, ratios).
    """
    x = np.asarray(x)
    y = np.asarray(y)
    xg = profile.grid.x
    ubar_p = np.interp(x, xg, profile.u_bar_prime[:, 0])
    psi = np.interp(y, xg, psi_tilde[:, 0])
    template = np.exp(-eta_prime * (np.abs(x)[:, None] + np.abs(y)[None, :]))
    C = 0.0
    loc = None
    ratios = []
    for lam, K in zip(lams, kernels):
        Kt = K - (np.outer(ubar_p, psi) / (lam - zero_eig) if has_pole else 0.0)
        r = np.abs(Kt) / template
        ratios.append(r.max())
        if r.max() > C:
            C = float(r.max())
            ij = np.unravel_index(np.argmax(r), r.shape)
            loc = (complex(lam), float(x[ij[0]]), float(y[ij[1]]))
    return C, loc, np.array(ratios)

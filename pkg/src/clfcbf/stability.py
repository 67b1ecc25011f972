"""Stability analysis of boundary equilibria via the closed-loop Jacobian.

Inside the region where a fixed active set A stays optimal, the closed
loop is smooth and its Jacobian at an equilibrium factors through the
Schur complement S_A = U_A^T P G U_A of the reduced dual system (P the
CLF-gradient deflation).  Two structural facts drive the classification:

* every active-barrier gradient is a left eigenvector of the closed-loop
  Jacobian with eigenvalue -alpha'_i(0) < 0, so the constraint directions
  are always attracting;
* on the orthogonal complement of the active gradients, the sign of the
  largest eigenvalue mu_max of the symmetrized equilibrium-field Jacobian
  decides between asymptotic stability (mu_max < 0) and instability
  (mu_max > 0, Chetaev direction available as a witness).

:func:`classify` implements the tangent-space test with a guard band
around zero ("marginal"); :func:`spectrum_cross_check` compares the
verdict against eigenvalues of a finite-difference Jacobian of the actual
closed loop, which knows nothing about the factorization.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import PreconditionError
from .qp import _PointData, closed_loop_field
from .systems import finite_difference_jacobian

__all__ = [
    "JacobianBundle",
    "StabilityVerdict",
    "SpectrumCheck",
    "frozen_multiplier_jacobian",
    "equilibrium_field_jacobian",
    "closed_loop_jacobian",
    "orthogonal_complement_basis",
    "verify_factorization",
    "classify",
    "spectrum_cross_check",
    "dual_block_inverse",
    "remark_difference_diagnostic",
]

#: condition-number ceiling for the active-set Schur complement.
MAX_SCHUR_CONDITION = 1e12


@dataclass(frozen=True)
class JacobianBundle:
    """Matrices assembled at one boundary equilibrium."""

    J_A: np.ndarray        # multiplier-frozen Jacobian at (lambda0_e, lambda_e)
    J_fA: np.ndarray       # Jacobian of the equilibrium field (CLF row eliminated)
    S_A: np.ndarray        # active-set Schur complement U_A^T P G U_A
    P_V: np.ndarray        # CLF-gradient deflation
    P_UA: np.ndarray       # active-gradient deflation built from S_A
    J_fcl: np.ndarray      # closed-loop Jacobian
    lambda_prime: np.ndarray  # alpha'_i(h_i) over the active set
    cond_S_A: float
    cond_B_V: float        # nan when grad V = 0 or G is singular


@dataclass(frozen=True)
class StabilityVerdict:
    """Three-way classification with the tangent-space statistic."""

    verdict: str  # "stable" | "unstable" | "marginal"
    mu_max: float
    witness: Optional[np.ndarray]  # unit tangent direction, present iff unstable
    spectrum: np.ndarray  # eigenvalues of the analytic closed-loop Jacobian


@dataclass(frozen=True)
class SpectrumCheck:
    """Finite-difference eigenvalues and their agreement with a verdict."""

    agree: bool
    eigenvalues: np.ndarray


def _weighted_gradient_jacobian(problem, x, gradient_fn, hessian):
    """d/dx [G(x) grad(x)]; exact G H when the input map is constant."""
    if problem.model.input_kind == "constant":
        return problem.gram(x) @ hessian
    return finite_difference_jacobian(lambda y: problem.gram(y) @ gradient_fn(y), x)


def frozen_multiplier_jacobian(problem, x, lambda0, lam, indices):
    """State Jacobian of f_nom + G(-lambda0 grad V + U_A lam), multipliers frozen.

    This is the Jacobian that enters the closed-loop factorization; the
    multipliers are treated as constants evaluated at the equilibrium.
    """
    indices = tuple(int(i) for i in indices)
    lam = np.asarray(lam, dtype=float).ravel()
    certs = problem.certificates
    J = problem.f_nom_jacobian(x)
    if lambda0 != 0.0:
        J = J - lambda0 * _weighted_gradient_jacobian(
            problem, x, certs.clf_gradient, certs.clf_hessian())
    for k, i in enumerate(indices):
        if lam[k] == 0.0:
            continue
        b = certs.cbfs[i - 1]
        J = J + lam[k] * _weighted_gradient_jacobian(
            problem, x, b.gradient, b.hessian())
    return J


def equilibrium_field_jacobian(problem, x, lam, indices):
    """State Jacobian of the equilibrium field f_A at frozen barrier multipliers.

    Unlike :func:`frozen_multiplier_jacobian` the CLF multiplier is the
    state-dependent p gamma(V(x)) here, which contributes the rank-one
    term p gamma'(V) G grad V grad V^T on top of the curvature terms.
    """
    indices = tuple(int(i) for i in indices)
    lam = np.asarray(lam, dtype=float).ravel()
    certs = problem.certificates
    p = problem.params.p
    if problem.model.input_kind != "constant":
        cols = [i - 1 for i in indices]

        def field(y):
            dy = _PointData(problem, y)
            out = dy.f_nom - p * dy.gamma_val * (dy.G @ dy.gradV)
            if cols:
                out = out + dy.G @ (dy.U[:, cols] @ lam)
            return out

        return finite_difference_jacobian(field, x)
    d = _PointData(problem, x)
    gradV = d.gradV
    gamma_slope = certs.gamma_slope(d.V)
    J = problem.f_nom_jacobian(x)
    J = J - p * (gamma_slope * np.outer(d.G @ gradV, gradV)
                 + d.gamma_val * (d.G @ certs.clf_hessian()))
    for k, i in enumerate(indices):
        if lam[k] == 0.0:
            continue
        J = J + lam[k] * (d.G @ certs.cbfs[i - 1].hessian())
    return J


def closed_loop_jacobian(problem, x_e, lam, indices):
    """Assemble the closed-loop Jacobian at a validated boundary equilibrium.

    Parameters
    ----------
    problem : ControlProblem
    x_e : (n,) array_like
        Equilibrium state on the active boundaries.
    lam : (r,) array_like
        Active barrier multipliers (ordered like ``indices``).
    indices : sequence of int
        Active barrier indices, 1-based.

    Returns
    -------
    JacobianBundle

    Raises
    ------
    PreconditionError
        If the active gradients are dependent, the input map has no
        authority on them, or the Schur complement is ill-conditioned.
    """
    indices = tuple(int(i) for i in indices)
    lam = np.asarray(lam, dtype=float).ravel()
    d = _PointData(problem, x_e)
    tol = problem.tolerances
    n = d.x.shape[0]
    cols = [i - 1 for i in indices]
    U_A = d.U[:, cols]
    r = U_A.shape[1]
    if r == 0:
        raise PreconditionError("closed_loop_jacobian needs a nonempty active set")
    sv = np.linalg.svd(U_A, compute_uv=False)
    if int(np.sum(sv > tol.rank * max(1.0, float(sv[0])))) < r:
        raise PreconditionError("active barrier gradients are linearly dependent")
    if float(np.max(np.abs(d.gT @ U_A))) < 1e-14:
        raise PreconditionError("input map has no authority on the active gradients")

    p = problem.params.p
    lambda0_e = p * d.gamma_val
    P_V = np.eye(n) - np.outer(d.G @ d.gradV, d.gradV) / d.c
    PVG = P_V @ d.G
    S_A = U_A.T @ PVG @ U_A
    S_A = 0.5 * (S_A + S_A.T)
    s_sv = np.linalg.svd(S_A, compute_uv=False)
    cond_S = float(s_sv[0] / s_sv[-1]) if s_sv[-1] > 0.0 else np.inf
    if not np.isfinite(cond_S) or cond_S > MAX_SCHUR_CONDITION:
        raise PreconditionError(
            f"Schur complement is numerically singular (condition {cond_S:.3e})")
    S_inv = np.linalg.inv(S_A)
    lam_prime = problem.certificates.alpha_slopes(x_e, indices)

    PVG_UA = PVG @ U_A
    P_UA = np.eye(n) - PVG_UA @ S_inv @ U_A.T
    J_A = frozen_multiplier_jacobian(problem, x_e, lambda0_e, lam, indices)
    gamma_slope = problem.certificates.gamma_slope(d.V)
    core = P_V @ J_A - (gamma_slope / d.c) * np.outer(d.G @ d.gradV, d.gradV)
    J_fcl = P_UA @ core - PVG_UA @ S_inv @ np.diag(lam_prime) @ U_A.T
    J_fA = equilibrium_field_jacobian(problem, x_e, lam, indices)

    cond_B_V = np.nan
    g_sv = np.linalg.svd(d.G, compute_uv=False)
    grad_norm = float(np.max(np.abs(d.gradV)))
    if grad_norm > 1e-12 and g_sv[-1] > tol.rank * max(1.0, float(g_sv[0])):
        W = orthogonal_complement_basis([d.G @ d.gradV])
        B_V = np.column_stack([d.gradV, W])
        cond_B_V = float(np.linalg.cond(B_V))

    return JacobianBundle(
        J_A=J_A, J_fA=J_fA, S_A=S_A, P_V=P_V, P_UA=P_UA, J_fcl=J_fcl,
        lambda_prime=lam_prime, cond_S_A=cond_S, cond_B_V=cond_B_V)


def orthogonal_complement_basis(vectors, metric=None):
    """Orthonormal basis of the complement of span(vectors) in a given metric.

    Parameters
    ----------
    vectors : sequence of (n,) arrays or (n, r) ndarray
        Spanning vectors (columns).  Must be linearly independent.
    metric : (n, n) ndarray, optional
        Symmetric positive-definite inner product; identity when omitted.

    Returns
    -------
    (n, n - r) ndarray
        Columns w satisfy w^T metric v = 0 for every input vector and are
        metric-orthonormal.  Deterministic: built by ordered elimination
        of the canonical basis against the inputs.
    """
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        V = np.asarray(vectors, dtype=float)
    else:
        V = np.column_stack([np.asarray(v, dtype=float).ravel() for v in vectors])
    n, r = V.shape
    X = np.eye(n) if metric is None else np.asarray(metric, dtype=float)
    if X.shape != (n, n):
        raise PreconditionError(f"metric has shape {X.shape}, expected ({n}, {n})")
    if not np.allclose(X, X.T, rtol=0.0, atol=1e-10):
        raise PreconditionError("metric must be symmetric")

    def inner(a, b):
        return float(a @ X @ b)

    basis = []
    for col in V.T:
        w = col.astype(float)
        for b in basis:
            w = w - inner(b, w) * b
        norm2 = inner(w, w)
        if norm2 <= 1e-20:
            raise PreconditionError("input vectors are dependent in the given metric")
        basis.append(w / np.sqrt(norm2))
    complement = []
    for k in range(n):
        if len(complement) == n - r:
            break
        w = np.zeros(n)
        w[k] = 1.0
        for b in basis + complement:
            w = w - inner(b, w) * b
        norm2 = inner(w, w)
        if norm2 > 1e-20:
            complement.append(w / np.sqrt(norm2))
    if len(complement) != n - r:
        raise PreconditionError("could not complete the complement basis")
    if complement:
        return np.column_stack(complement)
    return np.zeros((n, 0))


def verify_factorization(problem, x_e, lam, indices):
    """Residual of the congruence factorization of the deflated Jacobian.

    Checks that P J_A - gamma'(V)/c * G grad V grad V^T equals
    (B^T)^{-1} D B^T J_fA with B = [grad V | basis of {G grad V}^perp] and
    D = diag(1/(p c), I): the deflated multiplier-frozen Jacobian is
    congruent to the equilibrium-field Jacobian, which is why the latter
    decides stability.  Returns the relative residual, or None when the
    factorization does not apply (grad V = 0 or singular G).
    """
    indices = tuple(int(i) for i in indices)
    lam = np.asarray(lam, dtype=float).ravel()
    d = _PointData(problem, x_e)
    tol = problem.tolerances
    n = d.x.shape[0]
    if float(np.max(np.abs(d.gradV))) < 1e-12:
        return None
    g_sv = np.linalg.svd(d.G, compute_uv=False)
    if g_sv[-1] <= tol.rank * max(1.0, float(g_sv[0])):
        return None
    p = problem.params.p
    lambda0_e = p * d.gamma_val
    gamma_slope = problem.certificates.gamma_slope(d.V)
    J_A = frozen_multiplier_jacobian(problem, x_e, lambda0_e, lam, indices)
    J_fA = equilibrium_field_jacobian(problem, x_e, lam, indices)
    P_V = np.eye(n) - np.outer(d.G @ d.gradV, d.gradV) / d.c
    lhs = P_V @ J_A - (gamma_slope / d.c) * np.outer(d.G @ d.gradV, d.gradV)
    W = orthogonal_complement_basis([d.G @ d.gradV])
    B = np.column_stack([d.gradV, W])
    D = np.diag(np.concatenate([[1.0 / (p * d.c)], np.ones(n - 1)]))
    rhs = np.linalg.solve(B.T, D @ B.T @ J_fA)
    return float(np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(lhs))))


def classify(problem, x_e, lam, indices):
    """Classify a boundary equilibrium by the tangent-space curvature test.

    The active gradients span r always-attracting directions; stability is
    decided by mu_max, the largest eigenvalue of the symmetrized
    equilibrium-field Jacobian restricted to their orthogonal complement.
    ``mu_max > eps`` is unstable with a Chetaev witness direction,
    ``mu_max < -eps`` stable, in between marginal (no claim).  The special
    case r = n has no tangent space and is always stable.

    The two verdicts carry different strength.  An unstable verdict is
    definitive: the witness direction certifies a genuine escape.  A
    stable verdict rests on a curvature condition evaluated in the
    Euclidean inner product, and when the closed loop's invariant
    splitting is strongly oblique to the active gradients that condition
    can hold at a genuinely unstable equilibrium.  Stable verdicts should
    therefore be corroborated with :func:`spectrum_cross_check` (the CLI
    does, flagging any disagreement) rather than taken as proof alone.
    """
    indices = tuple(int(i) for i in indices)
    lam = np.asarray(lam, dtype=float).ravel()
    bundle = closed_loop_jacobian(problem, x_e, lam, indices)
    spectrum = _sorted_eigenvalues(bundle.J_fcl)
    n = bundle.J_fcl.shape[0]
    r = len(indices)
    eps = problem.tolerances.stability
    if r == n:
        return StabilityVerdict(
            verdict="stable", mu_max=-np.inf, witness=None, spectrum=spectrum)
    d = _PointData(problem, x_e)
    U_A = d.U[:, [i - 1 for i in indices]]
    B = orthogonal_complement_basis(U_A)
    J_sym = 0.5 * (bundle.J_fA + bundle.J_fA.T)
    M = B.T @ J_sym @ B
    vals, vecs = np.linalg.eigh(M)
    mu_max = float(vals[-1])
    if mu_max > eps:
        witness = B @ vecs[:, -1]
        witness = witness / np.linalg.norm(witness)
        lead = np.flatnonzero(np.abs(witness) > 1e-12)
        if lead.size and witness[lead[0]] < 0.0:
            witness = -witness
        return StabilityVerdict(
            verdict="unstable", mu_max=mu_max, witness=witness, spectrum=spectrum)
    if mu_max < -eps:
        return StabilityVerdict(
            verdict="stable", mu_max=mu_max, witness=None, spectrum=spectrum)
    return StabilityVerdict(
        verdict="marginal", mu_max=mu_max, witness=None, spectrum=spectrum)


def _sorted_eigenvalues(J):
    eigs = np.linalg.eigvals(J)
    order = np.lexsort((eigs.imag, eigs.real))[::-1]
    return eigs[order]


def spectrum_cross_check(problem, x_e, lam, indices, verdict):
    """Compare a verdict against the finite-difference closed-loop spectrum.

    Differentiates the actual closed loop (QP solve at every probe state)
    numerically and checks sign agreement of the largest real part, over
    and above the structurally negative constraint directions.  Requires a
    non-marginal verdict.
    """
    if verdict.verdict == "marginal":
        raise PreconditionError("spectrum cross-check needs a non-marginal verdict")
    x_e = np.asarray(x_e, dtype=float).ravel()
    J_fd = finite_difference_jacobian(lambda y: closed_loop_field(problem, y), x_e)
    eigs = _sorted_eigenvalues(J_fd)
    eps = problem.tolerances.spectrum
    max_real = float(np.max(eigs.real))
    if verdict.verdict == "unstable":
        agree = max_real > eps
    else:
        agree = max_real < -eps
    return SpectrumCheck(agree=agree, eigenvalues=eigs)


def dual_block_inverse(problem, x, indices):
    """Closed-form inverse of the reduced dual matrix [[c, -v^T], [-v, M_A]].

    Test oracle for the bordered-system algebra: the inverse is expressed
    through the Schur complement S_A as a rank-(r) correction of the
    leading 1/c entry.  Requires S_A invertible.
    """
    indices = tuple(int(i) for i in indices)
    d = _PointData(problem, x)
    cols = [i - 1 for i in indices]
    r = len(cols)
    v = d.v_full[cols]
    M_A = d.M_full[np.ix_(cols, cols)]
    S_A = M_A - np.outer(v, v) / d.c
    S_inv = np.linalg.inv(S_A)
    border = np.vstack([v[None, :], d.c * np.eye(r)])
    Ainv = np.zeros((r + 1, r + 1))
    Ainv[0, 0] = 1.0 / d.c
    return Ainv + (border @ S_inv @ border.T) / (d.c * d.c)


def remark_difference_diagnostic(problem, x_e, lam, indices):
    """How the two candidate formulas for J_A - J_fA actually compare.

    At the equilibrium multiplier lambda_0 = p gamma(V) the difference of
    the two Jacobians reduces to a rank-one term; the input-weighted
    candidate p gamma'(V) G grad V grad V^T matches direct differentiation,
    while the unweighted candidate p gamma'(V) grad V grad V^T only agrees
    when G is the identity.  Returns both residuals and the difference so
    the discrepancy stays visible.
    """
    indices = tuple(int(i) for i in indices)
    lam = np.asarray(lam, dtype=float).ravel()
    d = _PointData(problem, x_e)
    p = problem.params.p
    lambda0_e = p * d.gamma_val
    gamma_slope = problem.certificates.gamma_slope(d.V)
    J_A = frozen_multiplier_jacobian(problem, x_e, lambda0_e, lam, indices)
    J_fA = equilibrium_field_jacobian(problem, x_e, lam, indices)
    difference = J_A - J_fA
    with_weight = p * gamma_slope * np.outer(d.G @ d.gradV, d.gradV)
    without_weight = p * gamma_slope * np.outer(d.gradV, d.gradV)
    return {
        "difference": difference,
        "with_input_weight_residual": float(np.max(np.abs(difference - with_weight))),
        "without_input_weight_residual": float(
            np.max(np.abs(difference - without_weight))),
    }

"""Dense, small-N verifiers for the approximation and stability bounds.

Everything here forms N x N operators on purpose: these checks exist to
validate the scalable solver path on problems where the exact quantities are
still computable. They are gated to modest N by default.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .kernels import KernelColumns, as_matrix, center
from .kcca import KccaModel, project_many
from .nystrom import factor
from .sampling import SamplingPlan, sampling_matrix

__all__ = [
    "BoundReport",
    "d_matrix_norm",
    "projection_error_check",
    "correlation_error_check",
    "stability_check",
    "psd_ordering_check",
    "tail_bound_check",
    "write_reports",
]

_SLACK = 1e-8
_DENSE_N_LIMIT = 2000


@dataclass
class BoundReport:
    """One verified inequality: holds iff lhs <= rhs + 1e-8 max(1, rhs).

    `applicable` is False when the check's preconditions (e.g. a singular
    value gap) failed; such reports must never be counted as passes.
    """

    context: str
    lhs: float
    rhs: float
    holds: bool
    applicable: bool = True
    extras: dict = field(default_factory=dict)

    @classmethod
    def make(cls, context: str, lhs: float, rhs: float, applicable: bool = True,
             **extras) -> "BoundReport":
        holds = bool(applicable and lhs <= rhs + _SLACK * max(1.0, rhs))
        return cls(context=context, lhs=float(lhs), rhs=float(rhs),
                   holds=holds, applicable=applicable, extras=extras)

    def csv_row(self) -> list:
        return [self.context, self.lhs, self.rhs, self.holds, self.applicable]


def write_reports(path, reports) -> None:
    """Serialize reports as CSV rows (context, lhs, rhs, holds, applicable)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["context", "lhs", "rhs", "holds", "applicable"])
        for rep in reports:
            writer.writerow(rep.csv_row())


def _check_dense_feasible(n: int) -> None:
    if n > _DENSE_N_LIMIT:
        raise ValueError(f"diagnostics are dense and gated to N <= "
                         f"{_DENSE_N_LIMIT}; got N = {n}")


def _sym_norm(A: np.ndarray) -> float:
    return float(np.max(np.abs(scipy.linalg.eigvalsh(A))))


def ridge_projection(A: np.ndarray, lam: float) -> np.ndarray:
    """A (A + N lam I)^-1 for symmetric PSD A (dense)."""
    n = A.shape[0]
    out = scipy.linalg.solve(A + n * lam * np.eye(n), A, assume_a="pos")
    return 0.5 * (out + out.T)


def low_rank_dense(K, plan: SamplingPlan, gamma: float) -> np.ndarray:
    """Dense column-sampled approximation K S (S^T K S + N gamma I)^+ S^T K."""
    oracle = KernelColumns.from_gram(as_matrix(K))
    return factor(oracle, plan, gamma).dense()


def d_matrix_norm(K, plan: SamplingPlan | None, gamma: float) -> float:
    """Spectral norm of D = Phi - Phi^(1/2) U^T S S^T U Phi^(1/2).

    Phi = Sig (Sig + N gamma I)^-1 from the eigendecomposition K = U Sig U^T
    and S is the weighted sampling matrix. An empty plan gives ||Phi||.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    K = as_matrix(K)
    n = K.shape[0]
    _check_dense_feasible(n)
    sig, U = scipy.linalg.eigh(K)
    sig = np.maximum(sig, 0.0)
    phi = sig / (sig + n * gamma)
    if plan is None or plan.m == 0:
        return float(phi.max(initial=0.0))
    S = sampling_matrix(plan, n)
    B = np.sqrt(phi)[:, None] * (U.T @ S)
    D = np.diag(phi) - B @ B.T
    return _sym_norm(D)


def psd_ordering_check(K, plan: SamplingPlan, gamma: float) -> BoundReport:
    """Verify the ordering L_gamma <= L <= K in the PSD sense.

    lhs is the largest violation -min eig over the three gaps (K - L),
    (L - L_gamma), (K - L_gamma); rhs is the tolerance 1e-8 ||K||.
    """
    K = as_matrix(K)
    _check_dense_feasible(K.shape[0])
    L = low_rank_dense(K, plan, 0.0)
    Lg = low_rank_dense(K, plan, gamma)
    mins = [float(scipy.linalg.eigvalsh(M)[0])
            for M in (K - L, L - Lg, K - Lg)]
    norm_k = _sym_norm(K)
    return BoundReport.make("psd-ordering", lhs=-min(mins),
                            rhs=_SLACK * norm_k, min_eigs=mins, norm_k=norm_k)


def tail_bound_check(K, plan: SamplingPlan, gamma: float, t: float) -> BoundReport:
    """Verify max eig(K - L_gamma) <= N gamma / (1 - t) when ||D|| <= t."""
    K = as_matrix(K)
    n = K.shape[0]
    _check_dense_feasible(n)
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    d_norm = d_matrix_norm(K, plan, gamma)
    applicable = d_norm <= t
    Lg = low_rank_dense(K, plan, gamma)
    lhs = float(scipy.linalg.eigvalsh(K - Lg)[-1])
    rhs = n * gamma / (1.0 - t)
    return BoundReport.make("tail-bound", lhs=lhs, rhs=rhs,
                            applicable=applicable, d_norm=d_norm, t=t)


def projection_error_check(K, plan: SamplingPlan, gamma: float, lam: float,
                           t: float) -> BoundReport:
    """Verify the regularized-projection error bound (gamma/lam)/(1 - t).

    lhs is the max over the four spectral errors {uncentered, centered} x
    {L, L_gamma} of ||A (A + N lam I)^-1 - B (B + N lam I)^-1||; the report
    is not applicable unless the measured ||D|| is at most t.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    K = as_matrix(K)
    _check_dense_feasible(K.shape[0])
    d_norm = d_matrix_norm(K, plan, gamma)
    applicable = d_norm <= t
    L = low_rank_dense(K, plan, 0.0)
    Lg = low_rank_dense(K, plan, gamma)
    Kc = center(K).entries
    errs = {
        "uncentered_L": _sym_norm(ridge_projection(K, lam) - ridge_projection(L, lam)),
        "uncentered_Lgamma": _sym_norm(ridge_projection(K, lam) - ridge_projection(Lg, lam)),
        "centered_L": _sym_norm(ridge_projection(Kc, lam)
                                - ridge_projection(center(L).entries, lam)),
        "centered_Lgamma": _sym_norm(ridge_projection(Kc, lam)
                                     - ridge_projection(center(Lg).entries, lam)),
    }
    rhs = (gamma / lam) / (1.0 - t)
    return BoundReport.make("projection-error", lhs=max(errs.values()),
                            rhs=rhs, applicable=applicable, d_norm=d_norm,
                            t=t, **errs)


def _dense_t(K1c: np.ndarray, K2c: np.ndarray, lam1: float, lam2: float) -> np.ndarray:
    return ridge_projection(K1c, lam1) @ ridge_projection(K2c, lam2)


def correlation_error_check(K1, K2, plans: tuple, lambdas: tuple,
                            gammas: tuple, t1: float, t2: float) -> BoundReport:
    """Verify |rho - rho_tilde| against the reconstructed epsilon.

    epsilon is recovered from the per-view shrinkage gamma = eps lam (1-t)/2,
    i.e. eps_view = 2 gamma / (lam (1 - t)), taking the max over views. The
    intermediate quantities of the triangle-inequality chain (||T - T_tilde||
    and both per-view terms) are reported in extras; the report is gated on
    the measured ||D|| of both views.
    """
    K1 = as_matrix(K1)
    K2 = as_matrix(K2)
    n = K1.shape[0]
    _check_dense_feasible(n)
    plan1, plan2 = plans
    lam1, lam2 = lambdas
    gam1, gam2 = gammas
    K1c = center(K1).entries
    K2c = center(K2).entries
    L1c = center(low_rank_dense(K1, plan1, 0.0)).entries
    L2c = center(low_rank_dense(K2, plan2, 0.0)).entries

    T = _dense_t(K1c, K2c, lam1, lam2)
    T_tilde = _dense_t(L1c, L2c, lam1, lam2)
    rho = float(scipy.linalg.svdvals(T)[0])
    rho_tilde = float(scipy.linalg.svdvals(T_tilde)[0])
    t_err = float(np.linalg.norm(T - T_tilde, 2))
    view1_term = _sym_norm(ridge_projection(K1c, lam1) - ridge_projection(L1c, lam1))
    view2_term = _sym_norm(ridge_projection(K2c, lam2) - ridge_projection(L2c, lam2))

    d1 = d_matrix_norm(K1, plan1, gam1)
    d2 = d_matrix_norm(K2, plan2, gam2)
    eps = max(2.0 * gam1 / (lam1 * (1.0 - t1)), 2.0 * gam2 / (lam2 * (1.0 - t2)))
    applicable = d1 <= t1 and d2 <= t2
    return BoundReport.make("correlation-error",
                            lhs=abs(rho - rho_tilde), rhs=eps,
                            applicable=applicable, rho=rho,
                            rho_tilde=rho_tilde, t_err=t_err,
                            view1_term=view1_term, view2_term=view2_term,
                            d1=d1, d2=d2, t1=t1, t2=t2)


def _plan_from_landmarks(lm) -> SamplingPlan:
    # scale = 1/sqrt(p); the implied p gives back the same per-column weights
    return SamplingPlan(indices=lm.indices, p_sampled=1.0 / lm.scale**2)


def stability_check(exact: KccaModel, approx: KccaModel, test_points,
                    c: float = 1.0) -> list[BoundReport]:
    """Layered out-of-sample stability checks for the top canonical pair.

    Returns three reports:

    I.   ||a' - a~'|| <= (4 sqrt2 / r) ||T - T~||
    II.  ||a - a~|| / sqrt(N) <= (1/2 + 4 sqrt2 / r) eps / (N lam1)
    III. max_x |f(x) - f~(x)| <= (1/2 + 4 sqrt2 / r) c eps / lam1

    with r the singular value gap of T and eps = 2 max of the measured
    per-view projection errors (which dominates both the per-view terms and
    ||T - T~||, keeping every layer a certified inequality once the gap condition holds).
    All three are flagged not-applicable when r <= 0 or ||T - T~|| > r/2.
    """
    if exact.t_matrix is None or approx.t_matrix is None:
        raise ValueError("both models must carry their dense T matrix "
                         "(fit with keep_t=True)")
    if exact.view1 is None or exact.view2 is None:
        raise ValueError("exact model must carry view oracles")
    if approx.landmarks1 is None or approx.landmarks2 is None:
        raise ValueError("approx model must carry landmark bookkeeping")
    n = exact.n
    _check_dense_feasible(n)
    lam1 = exact.lambda1

    sigma2 = float(exact.rho[1]) if exact.L > 1 else float(exact.sigma_next)
    r = float(exact.rho[0]) - sigma2
    t_err = float(np.linalg.norm(exact.t_matrix - approx.t_matrix, 2))
    applicable = r > 0 and t_err <= r / 2.0

    # Sign-align the approximate singular pair to the exact one.
    a_p = exact.alpha_prime[:, 0]
    a_pt = approx.alpha_prime[:, 0].copy()
    flip = -1.0 if float(a_pt @ a_p) < 0 else 1.0
    a_pt *= flip

    K1 = exact.view1.dense()
    K2 = exact.view2.dense()
    L1 = low_rank_dense(K1, _plan_from_landmarks(approx.landmarks1), 0.0)
    L2 = low_rank_dense(K2, _plan_from_landmarks(approx.landmarks2), 0.0)
    eps1 = _sym_norm(ridge_projection(center(K1).entries, lam1)
                     - ridge_projection(center(L1).entries, lam1))
    eps2 = _sym_norm(ridge_projection(center(K2).entries, exact.lambda2)
                     - ridge_projection(center(L2).entries, exact.lambda2))
    eps = 2.0 * max(eps1, eps2)
    coef = 0.5 + 4.0 * math.sqrt(2.0) / r if r > 0 else np.inf

    step1 = BoundReport.make(
        "stability-step-I", lhs=float(np.linalg.norm(a_p - a_pt)),
        rhs=(4.0 * math.sqrt(2.0) / r) * t_err if r > 0 else np.inf,
        applicable=applicable, gap=r, t_err=t_err)

    alpha = exact.alpha[:, 0]
    alpha_t = flip * approx.alpha[:, 0]
    step2 = BoundReport.make(
        "stability-step-II",
        lhs=float(np.linalg.norm(alpha - alpha_t)) / math.sqrt(n),
        rhs=coef * eps / (n * lam1), applicable=applicable,
        eps=eps, eps_view1=eps1, eps_view2=eps2, eps_sum=eps1 + eps2,
        gap=r, t_err=t_err)

    X_test = np.atleast_2d(np.asarray(test_points, dtype=float))
    f_exact = project_many(exact, X_test, view=1)[:, 0]
    f_approx = flip * project_many(approx, X_test, view=1)[:, 0]
    step3 = BoundReport.make(
        "stability-step-III",
        lhs=float(np.max(np.abs(f_exact - f_approx))),
        rhs=coef * c * eps / lam1, applicable=applicable,
        eps=eps, gap=r, c=c, n_test=X_test.shape[0])

    return [step1, step2, step3]

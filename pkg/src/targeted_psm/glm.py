"""Observation-weighted l1-penalized GLM fitting.

Minimizes, over beta,

    (1/W) * sum_i w_i * [ -y_i * eta_i + g(eta_i) ]  +  lam * sum_{j penalized} |beta_j|

with eta_i = offset_i + x_i' beta and W = sum_i w_i.  The solver runs cyclic
coordinate descent on the IRLS quadratic with covariance updates (each sweep
costs O(d^2) after one O(n d^2) Gram build per IRLS pass), an active-set
strategy (full sweep, iterate on the active set, confirming full sweep), and
internal standardization of the columns to unit weighted variance.  The
penalty always applies to the coefficients on the original scale, which is
also the scale of the returned solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GlmFamily, neg_log_lik_glm

# Floor for logistic IRLS curvature so working weights never vanish.
MIN_IRLS_WEIGHT = 1e-5

DEFAULT_TOL_CD = 1e-7
DEFAULT_KKT_TOL = 1e-5
DEFAULT_MAX_SWEEPS = 1000
DEFAULT_MAX_IRLS = 100


def soft_threshold(a, t):
    """Soft-thresholding: sign(a) * max(|a| - t, 0); t must be >= 0."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be nonnegative")
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - t, 0.0)


@dataclass(frozen=True)
class WeightedGlmProblem:
    """One weighted lasso-GLM problem instance.

    X               (n, d) design; include an all-ones column yourself if an
                    intercept is wanted, and leave it unpenalized via
                    penalize_mask.
    y               (n,) outcomes
    weights         (n,) nonnegative observation weights, positive total
    lam             penalty level (>= 0; +inf pins every penalized coordinate
                    at zero)
    penalize_mask   (d,) bool, True where |beta_j| enters the penalty
                    (default: every coordinate penalized)
    offset          optional (n,) fixed addition to the linear predictor
    """

    family: GlmFamily
    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    lam: float
    penalize_mask: np.ndarray = None
    offset: np.ndarray = None

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float)
        w = np.ascontiguousarray(self.weights, dtype=float)
        mask = self.penalize_mask
        if mask is None:
            mask = np.ones(X.shape[1] if X.ndim == 2 else 0, dtype=bool)
        mask = np.ascontiguousarray(mask, dtype=bool)
        if X.ndim != 2:
            raise ValueError("X must be 2-d")
        n, d = X.shape
        if y.shape != (n,) or w.shape != (n,) or mask.shape != (d,):
            raise ValueError("inconsistent shapes among X, y, weights, mask")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if w.sum() <= 0:
            raise ValueError("total weight must be positive")
        lam = float(self.lam)
        if np.isnan(lam) or lam < 0:
            raise ValueError("lam must be >= 0")
        offset = self.offset
        if offset is None:
            offset = np.zeros(n)
        offset = np.ascontiguousarray(offset, dtype=float)
        if offset.shape != (n,) or not np.all(np.isfinite(offset)):
            raise ValueError("offset must be a finite length-n vector")
        self.family.validate_outcomes(y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "penalize_mask", mask)
        object.__setattr__(self, "offset", offset)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class LassoSolution:
    beta: np.ndarray
    objective: float
    n_iters: int
    kkt_max_violation: float


class SolverError(RuntimeError):
    """IRLS stopped making progress; `.best` carries the best iterate seen."""

    def __init__(self, message: str, best: LassoSolution):
        super().__init__(message)
        self.best = best


def _penalty_term(lam: float, beta_pen_l1: float) -> float:
    # Guard lam == inf: all penalized coordinates are then exactly zero and
    # the penalty contributes 0, not inf * 0 = nan.
    if beta_pen_l1 == 0.0:
        return 0.0
    return lam * beta_pen_l1


def objective_value(prob: WeightedGlmProblem, beta: np.ndarray) -> float:
    """Normalized weighted negative log-likelihood plus l1 penalty."""
    beta = np.asarray(beta, dtype=float)
    eta = prob.offset + prob.X @ beta
    W = prob.weights.sum()
    loss = float(prob.weights @ neg_log_lik_glm(prob.family, prob.y, eta)) / W
    l1 = float(np.abs(beta[prob.penalize_mask]).sum())
    return loss + _penalty_term(prob.lam, l1)


def kkt_residual(prob: WeightedGlmProblem, beta: np.ndarray) -> float:
    """Max violation of the subgradient stationarity conditions.

    With s_j = (1/W) sum_i w_i (g'(eta_i) - y_i) x_ij the violation is
      penalized, beta_j != 0 : | |s_j| - lam |
      penalized, beta_j == 0 : max(|s_j| - lam, 0)
      unpenalized            : |s_j|
    """
    beta = np.asarray(beta, dtype=float)
    eta = prob.offset + prob.X @ beta
    W = prob.weights.sum()
    s = prob.X.T @ (prob.weights * (prob.family.mean(eta) - prob.y)) / W
    viol = np.abs(s)  # unpenalized default
    pen = prob.penalize_mask
    nz = pen & (beta != 0.0)
    z = pen & (beta == 0.0)
    viol = np.where(nz, np.abs(np.abs(s) - prob.lam), viol)
    viol = np.where(z, np.maximum(np.abs(s) - prob.lam, 0.0), viol)
    return float(np.max(viol)) if viol.size else 0.0


def _scaled_penalty_value(pen: np.ndarray, beta_s: np.ndarray) -> float:
    # sum_j pen_j |beta_s_j| with inf * 0 treated as 0.
    nz = beta_s != 0.0
    if not np.any(nz):
        return 0.0
    return float((pen[nz] * np.abs(beta_s[nz])).sum())


def _cd_quadratic(A, b, pen, beta0, tol, max_sweeps):
    """Cyclic coordinate descent on  (1/2) beta'A beta - b'beta + sum pen|beta|.

    Full sweep first; then iterate on the active set (nonzero or unpenalized
    coordinates) until converged; then a confirming full sweep, repeating as
    needed.  Returns (beta, sweeps_used, converged).
    """
    beta = np.asarray(beta0, dtype=float).copy()
    d = np.diag(A).copy()
    grad_cache = A @ beta  # always equals A @ beta
    movable = d > 0.0
    all_idx = np.flatnonzero(movable)

    def sweep(idx):
        max_step = 0.0
        for j in idx:
            rho = b[j] - grad_cache[j] + d[j] * beta[j]
            t = pen[j]
            if t > 0.0:
                mag = abs(rho) - t
                new = 0.0 if mag <= 0.0 else np.copysign(mag, rho) / d[j]
            else:
                new = rho / d[j]
            diff = new - beta[j]
            if diff != 0.0:
                grad_cache[:] += A[:, j] * diff
                beta[j] = new
                ad = abs(diff)
                if ad > max_step:
                    max_step = ad
        return max_step

    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        step = sweep(all_idx)
        sweeps += 1
        if step <= tol:
            converged = True
            break
        while sweeps < max_sweeps:
            active = np.flatnonzero(movable & ((beta != 0.0) | (pen == 0.0)))
            if active.size == 0:
                break
            step = sweep(active)
            sweeps += 1
            if step <= tol:
                break
    return beta, sweeps, converged


def solve_weighted_lasso_glm(
    prob: WeightedGlmProblem,
    init: np.ndarray = None,
    *,
    tol_cd: float = DEFAULT_TOL_CD,
    kkt_tol: float = DEFAULT_KKT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    max_irls: int = DEFAULT_MAX_IRLS,
) -> LassoSolution:
    """Solve the weighted lasso-GLM problem; `init` warm-starts the solver
    (original scale).  Raises SolverError (best iterate attached) if IRLS
    stalls without reaching the KKT tolerance."""
    X, y, w, offset = prob.X, prob.y, prob.weights, prob.offset
    n, d = X.shape
    W = w.sum()

    # Standardize columns to unit weighted variance; constant columns keep
    # scale 1 (the intercept column lands here).
    mean1 = (w @ X) / W
    mean2 = (w @ np.square(X)) / W
    var = np.maximum(mean2 - np.square(mean1), 0.0)
    scale = np.sqrt(var)
    scale[scale < 1e-12] = 1.0
    Xs = X / scale

    # Penalty factors in the scaled coordinates: lam * |beta_j| transforms to
    # (lam / s_j) * |beta_s_j|.
    pen = np.where(prob.penalize_mask, prob.lam, 0.0) / scale

    beta_s = np.zeros(d) if init is None else np.asarray(init, dtype=float) * scale
    eta = offset + Xs @ beta_s

    gaussian = prob.family.kind == "gaussian"

    def true_objective(beta_s_vec, eta_vec):
        loss = float(w @ neg_log_lik_glm(prob.family, y, eta_vec)) / W
        return loss + _scaled_penalty_value(pen, beta_s_vec)

    obj = true_objective(beta_s, eta)
    best_obj, best_beta = obj, beta_s.copy()
    kkt = kkt_residual(prob, beta_s / scale)
    stall_count = 0
    outer_used = 0

    for outer in range(1, max_irls + 1):
        outer_used = outer
        if gaussian:
            irls_w = w
            working = y - offset
        else:
            mu = prob.family.mean(eta)
            curv = np.maximum(prob.family.variance(eta), MIN_IRLS_WEIGHT)
            irls_w = w * curv
            working = (eta - offset) + (y - mu) / curv

        A = (Xs * irls_w[:, None]).T @ Xs / W
        b = Xs.T @ (irls_w * working) / W
        proposal, _, _ = _cd_quadratic(A, b, pen, beta_s, tol_cd, max_sweeps)

        # Step acceptance on the true objective: full IRLS step when it
        # descends, otherwise halve toward the current iterate.
        step_dir = proposal - beta_s
        t = 1.0
        accepted = None
        for _ in range(40):
            cand = beta_s + t * step_dir
            cand_eta = offset + Xs @ cand
            cand_obj = true_objective(cand, cand_eta)
            if cand_obj <= obj + 1e-12:
                accepted = (cand, cand_eta, cand_obj)
                break
            t *= 0.5
        if accepted is None:
            stall_count += 1
            max_move = 0.0
        else:
            stall_count = 0
            new_beta, eta, obj = accepted
            max_move = float(np.max(np.abs(new_beta - beta_s))) if d else 0.0
            beta_s = new_beta

        if obj < best_obj:
            best_obj, best_beta = obj, beta_s.copy()

        kkt = kkt_residual(prob, beta_s / scale)
        if kkt <= kkt_tol and max_move <= tol_cd:
            return LassoSolution(
                beta=beta_s / scale,
                objective=obj,
                n_iters=outer_used,
                kkt_max_violation=kkt,
            )
        if stall_count >= 3:
            break

    best = LassoSolution(
        beta=best_beta / scale,
        objective=best_obj,
        n_iters=outer_used,
        kkt_max_violation=kkt_residual(prob, best_beta / scale),
    )
    if best.kkt_max_violation <= kkt_tol:
        return best
    raise SolverError(
        f"IRLS failed to reach KKT tolerance {kkt_tol} "
        f"(best violation {best.kkt_max_violation:.3e})",
        best,
    )

"""Schweppe-type GM estimation: Huber loss, robust scale, projection
statistics, leverage weights and the IRLS solver for the mean coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .kernels import cholesky_jitter
from .errors import DegenerateCloudError, DegreesOfFreedomError, RankDeficiencyError

MAD_FACTOR = 1.4826
SCALE_FLOOR = 1e-8
PS_QUANTILE = 0.975


def huber_rho(r, c: float = 1.5):
    """Huber loss: r**2/2 inside |r| < c, c|r| - c**2/2 outside."""
    a = np.abs(np.asarray(r, dtype=float))
    out = np.where(a < c, 0.5 * a**2, c * a - 0.5 * c**2)
    return out if out.ndim else float(out)


def huber_psi(r, c: float = 1.5):
    r = np.asarray(r, dtype=float)
    out = np.clip(r, -c, c)
    return out if out.ndim else float(out)


def huber_q_weight(r_s, c: float = 1.5):
    """IRLS weight psi(r)/r: 1 inside the threshold, c/|r| beyond it."""
    a = np.abs(np.asarray(r_s, dtype=float))
    with np.errstate(divide="ignore"):
        out = np.where(a <= c, 1.0, c / np.where(a > 0, a, 1.0))
    return out if out.ndim else float(out)


def huber_psi_prime_mean(c: float) -> float:
    """E[psi'(Z)] for standard normal Z, i.e. P(|Z| <= c)."""
    return float(2.0 * stats.norm.cdf(c) - 1.0) if np.isfinite(c) else 1.0


def robust_scale(r, q: int) -> float:
    """s = 1.4826 (1 + 5/(n - q)) median|r|, floored at 1e-8 when the median is zero."""
    r = np.asarray(r, dtype=float).ravel()
    n = r.size
    if n <= q:
        raise DegreesOfFreedomError(f"robust scale needs n > q (n={n}, q={q})")
    med = float(np.median(np.abs(r)))
    if med == 0.0:
        return SCALE_FLOOR
    return MAD_FACTOR * (1.0 + 5.0 / (n - q)) * med


def nonconstant_columns(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    return np.flatnonzero(np.ptp(H, axis=0) > 0)


def projection_statistics(H) -> np.ndarray:
    """Projection statistics of the rows of H.

    Every row is projected onto each direction running from the
    coordinatewise median through a data point; the statistic is the largest
    robustly standardised distance |z_i - med z| / (1.4826 MAD z) over those
    directions.  Constant columns (such as the intercept) are dropped first,
    and directions whose projected MAD is zero are skipped.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    n = H.shape[0]
    if n < 2:
        raise DegenerateCloudError("projection statistics need at least two points")
    cols = nonconstant_columns(H)
    if cols.size == 0:
        raise DegenerateCloudError("all points are identical; projection statistics undefined")
    Z = H[:, cols]
    M = np.median(Z, axis=0)
    U = Z - M
    norms = np.linalg.norm(U, axis=1)
    keep = norms > 0
    if not keep.any():
        raise DegenerateCloudError("every point equals the coordinatewise median")
    V = U[keep] / norms[keep, None]
    proj = Z @ V.T                      # (n, n_directions)
    med = np.median(proj, axis=0)
    dev = np.abs(proj - med)
    mad = MAD_FACTOR * np.median(dev, axis=0)
    ok = mad > 0
    if not ok.any():
        raise DegenerateCloudError("projected spread is zero along every direction")
    return (dev[:, ok] / mad[ok]).max(axis=1)


def ps_threshold(dof: int, quantile: float = PS_QUANTILE) -> float:
    """Chi-square cutoff for squared projection statistics."""
    return float(stats.chi2.ppf(quantile, dof))


@dataclass(frozen=True)
class LeverageWeights:
    ps: np.ndarray
    w: np.ndarray
    b: float

    @property
    def n_downweighted(self) -> int:
        return int(np.sum(self.w < 1.0))

    def to_dict(self) -> dict:
        return {"ps": self.ps.tolist(), "w": self.w.tolist(), "b": self.b}

    @classmethod
    def from_dict(cls, d) -> "LeverageWeights":
        return cls(np.asarray(d["ps"], float), np.asarray(d["w"], float), float(d["b"]))

    @classmethod
    def unit(cls, n: int) -> "LeverageWeights":
        return cls(np.zeros(n), np.ones(n), np.inf)


def leverage_weights(ps, b: float) -> LeverageWeights:
    """w_i = 1 when PS_i**2 <= b, else b / PS_i**2."""
    ps = np.asarray(ps, dtype=float)
    ps2 = ps**2
    with np.errstate(divide="ignore"):
        w = np.where(ps2 <= b, 1.0, b / np.where(ps2 > 0, ps2, 1.0))
    return LeverageWeights(ps=ps, w=w, b=float(b))


def shgm_objective(r, w, s: float, c: float = 1.5) -> float:
    """sum_i w_i**2 rho(r_i / (w_i s))."""
    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    return float(np.sum(w**2 * huber_rho(r / (w * s), c)))


@dataclass
class IrlsResult:
    beta: np.ndarray
    iterations: int
    final_residual_norm: float
    converged: bool
    scale: float
    q_weights: np.ndarray
    standardized_residuals: np.ndarray
    weight_trace: list = field(default_factory=list)


def _check_rank(M: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(M)):
        raise RankDeficiencyError(f"{what} contains non-finite entries")
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] <= s[0] * M.shape[0] * np.finfo(float).eps:
        # name columns involved in the weakest direction
        _, _, vt = np.linalg.svd(M)
        cols = np.flatnonzero(np.abs(vt[-1]) > 1e-3)
        raise RankDeficiencyError(
            f"{what} is singular; basis columns {cols.tolist()} are (nearly) collinear - "
            "reduce the basis or drop redundant inputs", columns=cols)


def wls_solve(H, y, L) -> np.ndarray:
    """(H' S^-1 H)^-1 H' S^-1 y given the lower Cholesky factor L of S.

    Uses two triangular solves and a Cholesky factorisation of the normal
    matrix; no explicit inverse is formed.
    """
    Ht = linalg.solve_triangular(L, H, lower=True)
    yt = linalg.solve_triangular(L, y, lower=True)
    A = Ht.T @ Ht
    try:
        cf = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError:
        _check_rank(A, "normal matrix H'S^-1H")
        raise RankDeficiencyError("normal matrix H'S^-1H is not positive definite") from None
    beta = linalg.cho_solve(cf, Ht.T @ yt)
    if not np.all(np.isfinite(beta)):
        _check_rank(A, "normal matrix H'S^-1H")
    return beta


def shgm_irls(H, y, Sigma, weights: LeverageWeights, c: float = 1.5, tol: float = 1e-6,
              max_iter: int = 100, beta0=None, chol=None) -> IrlsResult:
    """IRLS for the SHGM estimate of the mean coefficients.

    Pass ``chol`` (lower Cholesky factor of Sigma) to skip refactorising.
    Starts from the WLS solution unless ``beta0`` is given.  The update
    is ``beta <- (H' Q S^-1 H)^-1 H' Q S^-1 y`` with Q the diagonal of
    Huber weights of the standardized residuals r_i / (w_i s); the scale s
    is re-estimated at every iteration.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = H.shape
    if n <= q:
        raise DegreesOfFreedomError(f"IRLS needs n > q (n={n}, q={q})")
    L = chol if chol is not None else cholesky_jitter(Sigma)[0]
    w = weights.w
    beta_wls = wls_solve(H, y, L)
    beta = beta_wls if beta0 is None else np.asarray(beta0, dtype=float)
    SiH = linalg.cho_solve((L, True), H)
    Siy = linalg.cho_solve((L, True), y)

    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        r = y - H @ beta
        s = robust_scale(r, q)
        r_s = r / (w * s)
        qw = huber_q_weight(r_s, c)
        trace.append(qw)
        if np.all(qw == 1.0):
            beta_new = beta_wls
        else:
            A = H.T @ (qw[:, None] * SiH)
            rhs = H.T @ (qw * Siy)
            try:
                beta_new = linalg.solve(A, rhs)
            except (linalg.LinAlgError, ValueError):
                _check_rank(A, "weighted normal matrix H'QS^-1H")
                raise
            if not np.all(np.isfinite(beta_new)):
                _check_rank(A, "weighted normal matrix H'QS^-1H")
        step = np.max(np.abs(beta_new - beta))
        done = step <= tol * (1.0 + np.max(np.abs(beta)))
        beta = beta_new
        if done:
            converged = True
            break

    r = y - H @ beta
    s = robust_scale(r, q)
    r_s = r / (w * s)
    return IrlsResult(beta=beta, iterations=it, final_residual_norm=float(np.linalg.norm(r)),
                      converged=converged, scale=s, q_weights=huber_q_weight(r_s, c),
                      standardized_residuals=r_s, weight_trace=trace)

"""Gaussian-process surrogate with a robust (SHGM) or plain (WLS) mean.

``train`` alternates a mean-coefficient step (IRLS in robust mode, WLS in
plain mode) with maximum-likelihood updates of the covariance
hyperparameters until the coefficients settle.  ``predict`` returns the
conditional mean and covariance at new inputs.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

from .basis import BasisSpec, Standardizer, build_design_matrix
from .errors import (ConfigError, DegreesOfFreedomError, IllConditionedKernelError,
                     InputShapeError, OptimizationFailure, TrainingError)
from .kernels import (JITTER_FLOOR, KernelHyperparameters, KernelSpec, _profile, add_nugget,
                      cholesky_jitter, grad_factor, kernel_matrix)
from .robust import (LeverageWeights, huber_psi, huber_psi_prime_mean, leverage_weights,
                     nonconstant_columns, projection_statistics, ps_threshold, shgm_irls, wls_solve)

log = logging.getLogger(__name__)

MODES = ("rpm", "gpm")
LOG_2PI = np.log(2.0 * np.pi)
FORMAT_TAG = "rgpf-model"
# length scales may shrink to l0 / LENGTH_FLOOR and grow to l0 * LENGTH_CEIL
LENGTH_FLOOR = 10.0
LENGTH_CEIL = 1000.0


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to train one scalar surrogate.

    ``mode`` is ``"rpm"`` (SHGM mean with projection-statistics weights) or
    ``"gpm"`` (plain WLS mean).  ``ps_b=None`` uses the 97.5% chi-square
    quantile with one degree of freedom per non-constant basis column.
    ``fixed_noise`` pins the nugget instead of estimating it.
    """
    basis: str = "quadratic"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    mode: str = "rpm"
    huber_c: float = 1.5
    ps_b: float | None = None
    irls_tol: float = 1e-6
    irls_max_iter: int = 100
    outer_max_iter: int = 20
    outer_tol: float = 1e-3
    n_starts: int = 5
    optimize: bool = True
    fixed_noise: float | None = None
    standardize: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown estimator mode {self.mode!r}; choose from {MODES}")
        if not self.huber_c > 0:
            raise ConfigError("Huber threshold c must be positive")
        if self.ps_b is not None and not self.ps_b > 0:
            raise ConfigError("projection-statistics threshold b must be positive")
        if not 1 <= self.n_starts <= 5:
            raise ConfigError("n_starts must be between 1 and 5")

    @property
    def robust(self) -> bool:
        return self.mode == "rpm"

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "kernel"}
        d["kernel"] = self.kernel.to_dict()
        if d["huber_c"] == np.inf:
            d["huber_c"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d) -> "ModelSpec":
        d = dict(d)
        d["kernel"] = KernelSpec.from_dict(d["kernel"])
        if d.get("huber_c") == "inf":
            d["huber_c"] = np.inf
        return cls(**d)


# ---------------------------------------------------------------------------
# linear-algebra building blocks
# ---------------------------------------------------------------------------

def wls_beta(H, Sigma, y) -> np.ndarray:
    """Generalised least squares (H' S^-1 H)^-1 H' S^-1 y."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    L, _ = cholesky_jitter(np.asarray(Sigma, dtype=float))
    return wls_solve(H, np.asarray(y, dtype=float), L)


def beta_covariance(H, Sigma, tau2: float) -> np.ndarray:
    """Posterior covariance tau2 (H' S^-1 H)^-1 of the mean coefficients under a flat prior."""
    L, _ = cholesky_jitter(np.asarray(Sigma, dtype=float))
    Ht = linalg.solve_triangular(L, H, lower=True)
    return tau2 * linalg.cho_solve(linalg.cho_factor(Ht.T @ Ht, lower=True), np.eye(Ht.shape[1]))


@dataclass(frozen=True)
class Tau2Posterior:
    shape: float
    scale: float
    tau2_hat: float


def tau2_posterior(H, Sigma, y) -> Tau2Posterior:
    """Inverse-gamma posterior of the signal variance under the weak prior 1/tau2."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.asarray(y, dtype=float)
    n, q = H.shape
    if n <= q + 2:
        raise DegreesOfFreedomError(f"tau2 posterior needs n > q + 2 (n={n}, q={q})")
    L, _ = cholesky_jitter(np.asarray(Sigma, dtype=float))
    Ht = linalg.solve_triangular(L, H, lower=True)
    yt = linalg.solve_triangular(L, y, lower=True)
    beta = wls_solve(H, y, L)
    quad = float(np.sum((yt - Ht @ beta) ** 2))
    tau2_hat = quad / (n - q - 2)
    return Tau2Posterior(shape=(n - q) / 2.0, scale=(n - q - 2) * tau2_hat / 2.0, tau2_hat=tau2_hat)


def residual_sensitivity(H, Sigma) -> tuple[np.ndarray, np.ndarray]:
    """Hat matrix S = H (H' S^-1 H)^-1 H' S^-1 and residual sensitivity W = I - S."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    L, _ = cholesky_jitter(np.asarray(Sigma, dtype=float))
    SiH = linalg.cho_solve((L, True), H)
    A = H.T @ SiH
    try:
        cf = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError:
        wls_solve(H, np.zeros(H.shape[0]), L)  # raises the named rank error
        raise
    S = H @ linalg.cho_solve(cf, SiH.T)
    return S, np.eye(H.shape[0]) - S


def smearing_masking_demo(W, e) -> np.ndarray:
    """Residuals r = W e produced by the gross-error vector e."""
    W = np.asarray(W, dtype=float)
    e = np.asarray(e, dtype=float)
    if W.shape[1] != e.size:
        raise InputShapeError(f"W has {W.shape[1]} columns, error vector has {e.size} entries")
    return W @ e


def masking_pair(W, i: int = 0, j: int = 1) -> np.ndarray:
    """Unit error vector on coordinates {i, j} that W maps to ~0 on rows i and j.

    It is the right singular vector of the 2x2 block W[[i,j]][:, [i,j]] with
    the smallest singular value.
    """
    W = np.asarray(W, dtype=float)
    idx = [i, j]
    _, _, vt = np.linalg.svd(W[np.ix_(idx, idx)])
    v = vt[-1] if vt[-1][np.argmax(np.abs(vt[-1]))] > 0 else -vt[-1]
    e = np.zeros(W.shape[0])
    e[idx] = v
    return e


def residual_demo_instance(n: int = 8, noise: float = 0.1):
    """Toy regression for the smearing/masking demonstration.

    Rows 0 and 1 are leverage points that alone carry the second regressor;
    the remaining ``n - 2`` points lie on the line ``x2 = 0``.  Because the
    two leverage rows span a direction nobody else informs, an error vector
    proportional to their ``x2`` values is absorbed by the fit entirely.
    Returns ``(H, Sigma)`` with an rbf covariance in ``x1`` plus a nugget.
    """
    if n < 4:
        raise ConfigError("residual demo needs at least 4 points")
    x1 = np.linspace(-1.0, 1.0, n - 2)
    X = np.vstack([[[0.3, 2.0], [-0.4, 1.5]], np.column_stack([x1, np.zeros(n - 2)])])
    H = np.column_stack([np.ones(n), X])
    K = kernel_matrix(X[:, :1], X[:, :1], KernelSpec("rbf"), KernelHyperparameters([0.5], 1.0, noise))
    return H, add_nugget(K, noise)


# ---------------------------------------------------------------------------
# marginal likelihood
# ---------------------------------------------------------------------------

def _pairwise_components(X: np.ndarray, absolute: bool) -> np.ndarray:
    """(n*n, d) matrix of per-dimension squared (or absolute) differences."""
    n, d = X.shape
    D = X[:, None, :] - X[None, :, :]
    D = np.abs(D) if absolute else D * D
    return D.reshape(n * n, d)


class _Likelihood:
    """Negative log marginal likelihood of residuals r under N(0, K + s2 I)."""

    def __init__(self, X, r, kernel: KernelSpec, fixed_noise=None):
        self.X = np.asarray(X, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.kernel = kernel
        self.fixed_noise = fixed_noise
        self.n, self.d = self.X.shape
        self.R = _pairwise_components(self.X, kernel.uses_abs)

    def unpack(self, theta):
        d = self.d
        ls = np.exp(theta[:d])
        tau2 = float(np.exp(theta[d]))
        s2 = float(self.fixed_noise) if self.fixed_noise is not None else float(np.exp(theta[d + 1]))
        return ls, tau2, s2

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        n, d = self.n, self.d
        ls, tau2, s2 = self.unpack(theta)
        inv = 1.0 / ls if self.kernel.uses_abs else 1.0 / ls**2
        dist = (self.R @ inv).reshape(n, n)
        K = _profile(self.kernel, dist, tau2)
        nugget = max(s2, JITTER_FLOOR * tau2)
        S = K.copy()
        S[np.diag_indices(n)] += nugget
        L, jitter = cholesky_jitter(S, tau2)
        alpha = linalg.cho_solve((L, True), self.r)
        value = 0.5 * self.r @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * LOG_2PI

        Sinv = linalg.cho_solve((L, True), np.eye(n))
        B = Sinv - np.outer(alpha, alpha)
        G = grad_factor(self.kernel, dist, K, tau2)
        grad = np.empty(d + 2)
        grad[:d] = 0.5 * (self.R.T @ (B * G).ravel()) * inv
        grad[d] = 0.5 * np.sum(B * K)
        if self.fixed_noise is None and s2 >= JITTER_FLOOR * tau2:
            grad[d + 1] = 0.5 * s2 * np.trace(B)
        else:
            grad[d + 1] = 0.0
        return float(value), grad


def neg_log_marginal_likelihood(hp: KernelHyperparameters, beta, X, y, kernel: KernelSpec,
                                basis: str | BasisSpec = "constant") -> tuple[float, np.ndarray]:
    """Value and log-space gradient of -log L(y | X, beta, l, tau2, s2).

    ``X`` is in model coordinates (already standardised).  The gradient is
    ordered (log l_1, ..., log l_d, log tau2, log s2).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    bspec = basis if isinstance(basis, BasisSpec) else BasisSpec(basis, X.shape[1])
    r = np.asarray(y, dtype=float) - build_design_matrix(X, bspec) @ np.atleast_1d(beta)
    if hp.length_scales.size != X.shape[1]:
        raise InputShapeError(f"{hp.length_scales.size} length scales for {X.shape[1]} input columns")
    return _Likelihood(X, r, kernel)(hp.to_log())


def median_distance_lengths(X) -> np.ndarray:
    """Per-dimension median of non-zero pairwise absolute differences."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    iu = np.triu_indices(n, 1)
    out = np.ones(d)
    for k in range(d):
        diff = np.abs(X[:, k][:, None] - X[:, k][None, :])[iu]
        diff = diff[diff > 0]
        if diff.size:
            out[k] = np.median(diff)
    return out


def _reference_variance(y) -> float:
    v = float(np.var(y))
    return v if v > 0 else 1.0


def default_hyperparameters(X, y) -> KernelHyperparameters:
    v = _reference_variance(y)
    return KernelHyperparameters(median_distance_lengths(X), v, 1e-2 * v)


def hyperparameter_bounds(X, y) -> list[tuple[float, float]]:
    l0 = np.log(median_distance_lengths(X))
    v = np.log(_reference_variance(y))
    bounds = [(a - np.log(LENGTH_FLOOR), a + np.log(LENGTH_CEIL)) for a in l0]
    bounds.append((v + np.log(1e-10), v + np.log(1e4)))
    bounds.append((v + np.log(1e-10), v + np.log(1e4)))
    return bounds


@dataclass
class OptimizationResult:
    hp: KernelHyperparameters
    value: float
    init_value: float
    trace: list


def optimize_hyperparameters(X, y, beta, kernel: KernelSpec, basis: str | BasisSpec,
                             init: KernelHyperparameters | None = None, n_starts: int = 5,
                             fixed_noise: float | None = None, maxiter: int = 300) -> OptimizationResult:
    """Minimise the negative log marginal likelihood over (l, tau2, s2) with beta fixed.

    L-BFGS-B in log space from ``init`` plus up to four extra starts built
    from the median-distance length heuristic, var(y) for tau2 and a ladder
    of nugget fractions of var(y).  The best local optimum is returned.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    bspec = basis if isinstance(basis, BasisSpec) else BasisSpec(basis, X.shape[1])
    r = y - build_design_matrix(X, bspec) @ np.atleast_1d(beta)
    obj = _Likelihood(X, r, kernel, fixed_noise)
    d = X.shape[1]

    v = _reference_variance(y)
    l0 = median_distance_lengths(X)
    init = init or default_hyperparameters(X, y)
    extra = [KernelHyperparameters(l0, v, f * v) for f in (1e-4, 1e-2, 1e-1)]
    extra.append(KernelHyperparameters(2.0 * l0, v, 1e-3 * v))
    starts = [init, *extra][:n_starts]

    bounds = hyperparameter_bounds(X, y)
    if fixed_noise is not None:
        bounds[-1] = (None, None)
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])

    trace = []
    best = None
    init_value = np.inf
    for k, start in enumerate(starts):
        theta0 = start.to_log()
        if start is not init:
            theta0 = np.clip(theta0, lo, hi)
        try:
            f0, _ = obj(theta0)
            if k == 0:
                init_value = f0
            res = optimize.minimize(obj, theta0, jac=True, method="L-BFGS-B",
                                    bounds=bounds, options={"maxiter": maxiter})
            theta, f = res.x, float(res.fun)
            if f0 < f:  # never return something worse than the start
                theta, f = theta0, f0
            trace.append({"start": k, "value": f, "iterations": int(res.nit), "message": str(res.message)})
        except (IllConditionedKernelError, FloatingPointError, ValueError) as exc:
            trace.append({"start": k, "error": str(exc)})
            continue
        if best is None or f < best[1]:
            best = (theta, f)
    if best is None:
        raise OptimizationFailure("hyperparameter optimisation failed from every start", trace)
    theta = best[0].copy()
    if fixed_noise is not None:
        theta[d + 1] = np.log(fixed_noise) if fixed_noise > 0 else -np.inf
    ls, tau2, s2 = np.exp(theta[:d]), float(np.exp(theta[d])), float(np.exp(theta[d + 1]))
    hp = KernelHyperparameters(ls, tau2, fixed_noise if fixed_noise is not None else s2)
    return OptimizationResult(hp=hp, value=best[1], init_value=init_value, trace=trace)


# ---------------------------------------------------------------------------
# trained model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    beta: np.ndarray
    hp: KernelHyperparameters
    standardizer: Standardizer
    training_inputs: np.ndarray
    training_outputs: np.ndarray
    sigma: np.ndarray
    chol_sigma: np.ndarray
    alpha: np.ndarray
    weights: LeverageWeights | None = None
    scale: float | None = None
    standardized_residuals: np.ndarray | None = None
    q_weights: np.ndarray | None = None
    fit_trace: tuple = ()
    converged: bool = True
    output_name: str | None = None

    def __post_init__(self):
        for name in ("beta", "training_inputs", "training_outputs", "sigma", "chol_sigma", "alpha",
                     "standardized_residuals", "q_weights"):
            a = getattr(self, name)
            if isinstance(a, np.ndarray):
                a.setflags(write=False)

    @property
    def basis_spec(self) -> BasisSpec:
        return BasisSpec(self.spec.basis, self.training_inputs.shape[1])

    @property
    def model_inputs(self) -> np.ndarray:
        return self.standardizer.transform(self.training_inputs)

    @property
    def design_matrix(self) -> np.ndarray:
        return build_design_matrix(self.model_inputs, self.basis_spec)

    @property
    def residuals(self) -> np.ndarray:
        return self.training_outputs - self.design_matrix @ self.beta

    def to_dict(self) -> dict:
        doc = {
            "format": FORMAT_TAG,
            "version": 1,
            "spec": self.spec.to_dict(),
            "beta": self.beta.tolist(),
            "hyperparameters": self.hp.to_dict(),
            "standardizer": self.standardizer.to_dict(),
            "training_inputs": self.training_inputs.tolist(),
            "training_outputs": self.training_outputs.tolist(),
            "sigma": self.sigma.tolist(),
            "output_name": self.output_name,
            "fit": {"converged": self.converged, "trace": list(self.fit_trace),
                    "scale": self.scale,
                    "standardized_residuals": None if self.standardized_residuals is None
                    else self.standardized_residuals.tolist()},
        }
        if self.weights is not None:
            doc["weights"] = self.weights.to_dict()
        return doc

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=1, allow_nan=False)

    @classmethod
    def from_dict(cls, doc) -> "TrainedModel":
        if doc.get("format") != FORMAT_TAG:
            raise ConfigError("not an rgpf model document")
        spec = ModelSpec.from_dict(doc["spec"])
        hp = KernelHyperparameters.from_dict(doc["hyperparameters"])
        std = Standardizer.from_dict(doc["standardizer"])
        X = np.asarray(doc["training_inputs"], dtype=float)
        y = np.asarray(doc["training_outputs"], dtype=float)
        beta = np.asarray(doc["beta"], dtype=float)
        sigma = np.asarray(doc["sigma"], dtype=float)
        L = linalg.cholesky(sigma, lower=True)
        H = build_design_matrix(std.transform(X), BasisSpec(spec.basis, X.shape[1]))
        alpha = linalg.cho_solve((L, True), y - H @ beta)
        weights = LeverageWeights.from_dict(doc["weights"]) if "weights" in doc else None
        fit = doc.get("fit", {})
        r_s = fit.get("standardized_residuals")
        r_s = None if r_s is None else np.asarray(r_s, dtype=float)
        q_w = None
        if r_s is not None:
            from .robust import huber_q_weight
            q_w = huber_q_weight(r_s, spec.huber_c)
        return cls(spec=spec, beta=beta, hp=hp, standardizer=std, training_inputs=X,
                   training_outputs=y, sigma=sigma, chol_sigma=L, alpha=alpha, weights=weights,
                   scale=fit.get("scale"), standardized_residuals=r_s, q_weights=q_w,
                   fit_trace=tuple(fit.get("trace", ())), converged=fit.get("converged", True),
                   output_name=doc.get("output_name"))

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        return cls.from_dict(json.loads(text))


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, float) and not np.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    return o


def _covariance(Xs, kernel, hp) -> np.ndarray:
    return add_nugget(kernel_matrix(Xs, Xs, kernel, hp), hp.noise_variance, hp.signal_variance)


def train(X, y, spec: ModelSpec, hp_init: KernelHyperparameters | None = None) -> TrainedModel:
    """Fit a surrogate to inputs X (n x 2p) and scalar outputs y (n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if y.size != n:
        raise InputShapeError(f"{n} input rows but {y.size} outputs")
    std = Standardizer.fit(X) if spec.standardize else Standardizer.identity(d)
    Xs = std.transform(X)
    bspec = BasisSpec(spec.basis, d)
    H = build_design_matrix(Xs, bspec)
    q = H.shape[1]
    if n <= q + 2:
        raise DegreesOfFreedomError(f"training needs n > q + 2 (n={n}, q={q} for a {spec.basis} basis)")

    weights = None
    if spec.robust and nonconstant_columns(H).size == 0:
        # a constant basis carries no position, so no row is a leverage point
        weights = LeverageWeights.unit(n)
    elif spec.robust:
        ps = projection_statistics(H)
        b = spec.ps_b if spec.ps_b is not None else ps_threshold(len(nonconstant_columns(H)))
        weights = leverage_weights(ps, b)

    hp = hp_init or default_hyperparameters(Xs, y)
    if spec.fixed_noise is not None:
        hp = replace(hp, noise_variance=spec.fixed_noise)

    def factor(hp):
        S = _covariance(Xs, spec.kernel, hp)
        L, jitter = cholesky_jitter(S, hp.signal_variance)
        if jitter:
            S = S + jitter * np.eye(n)
        return S, L

    def beta_step(L, beta_prev=None):
        if spec.robust:
            res = shgm_irls(H, y, None, weights, spec.huber_c, spec.irls_tol, spec.irls_max_iter,
                            beta0=beta_prev, chol=L)
            return res.beta, res
        return wls_solve(H, y, L), None

    try:
        S, L = factor(hp)
        beta, irls = beta_step(L)
        trace = [{"round": 0, "beta_step": 0.0, "irls_iterations": irls.iterations if irls else 0}]
        converged = not spec.optimize
        if spec.optimize:
            for k in range(1, spec.outer_max_iter + 1):
                opt = optimize_hyperparameters(Xs, y, beta, spec.kernel, bspec, init=hp,
                                               n_starts=spec.n_starts if k == 1 else 1,
                                               fixed_noise=spec.fixed_noise)
                hp = opt.hp
                S, L = factor(hp)
                beta_new, irls = beta_step(L, beta if spec.robust else None)
                step = float(np.max(np.abs(beta_new - beta)))
                trace.append({"round": k, "nlml": opt.value, "beta_step": step,
                              "irls_iterations": irls.iterations if irls else 0})
                done = step <= spec.outer_tol * (1.0 + float(np.max(np.abs(beta))))
                beta = beta_new
                if done:
                    converged = True
                    break
    except TrainingError:
        raise
    except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        raise TrainingError(f"training failed: {exc}") from exc
    if not converged:
        log.warning("outer loop stopped after %d rounds without converging", spec.outer_max_iter)

    alpha = linalg.cho_solve((L, True), y - H @ beta)
    return TrainedModel(
        spec=spec, beta=beta, hp=hp, standardizer=std, training_inputs=X.copy(),
        training_outputs=y.copy(), sigma=S, chol_sigma=L, alpha=alpha, weights=weights,
        scale=irls.scale if irls else None,
        standardized_residuals=irls.standardized_residuals if irls else None,
        q_weights=irls.q_weights if irls else None,
        fit_trace=tuple(trace), converged=converged)


@dataclass
class PredictiveDistribution:
    mean: np.ndarray
    covariance: np.ndarray | None
    per_point_std: np.ndarray


def predict(model: TrainedModel, X_star, noisy: bool = False, full_covariance: bool = True,
            chunk: int = 4096) -> PredictiveDistribution:
    """Conditional mean h*'beta + C' S^-1 r and covariance V - C' S^-1 C at X_star.

    With ``noisy=True`` the nugget is added to the predictive variance
    (observation rather than latent-function prediction).
    """
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if X_star.shape[1] != model.training_inputs.shape[1]:
        raise InputShapeError(f"X_star has {X_star.shape[1]} columns, model expects "
                              f"{model.training_inputs.shape[1]}")
    Xs = model.model_inputs
    Zs = model.standardizer.transform(X_star)
    kern, hp = model.spec.kernel, model.hp
    Hs = build_design_matrix(Zs, model.basis_spec)
    m = Zs.shape[0]
    prior_var = float(_profile(kern, np.zeros(1), hp.signal_variance)[0])

    if full_covariance:
        C = kernel_matrix(Xs, Zs, kern, hp)
        v = linalg.solve_triangular(model.chol_sigma, C, lower=True)
        mean = Hs @ model.beta + C.T @ model.alpha
        cov = kernel_matrix(Zs, Zs, kern, hp) - v.T @ v
        cov = 0.5 * (cov + cov.T)
        if noisy:
            cov[np.diag_indices(m)] += hp.noise_variance
        diag = np.diag(cov).copy()
        if diag.min() < -1e-10 * max(1.0, hp.signal_variance):
            log.warning("predictive variance below -1e-10 (min %g); clamping", diag.min())
        np.maximum(diag, 0.0, out=diag)
        return PredictiveDistribution(mean=mean, covariance=cov, per_point_std=np.sqrt(diag))

    mean = np.empty(m)
    var = np.empty(m)
    for a in range(0, m, chunk):
        sl = slice(a, min(a + chunk, m))
        C = kernel_matrix(Xs, Zs[sl], kern, hp)
        v = linalg.solve_triangular(model.chol_sigma, C, lower=True)
        mean[sl] = Hs[sl] @ model.beta + C.T @ model.alpha
        var[sl] = prior_var - np.sum(v * v, axis=0)
    if noisy:
        var += hp.noise_variance
    return PredictiveDistribution(mean=mean, covariance=None, per_point_std=np.sqrt(np.maximum(var, 0.0)))


def influence_diagnostic(model: TrainedModel, i: int, weight_override: float | None = None):
    """Influence of training point i on the mean coefficients.

    Returns ``(ir, ip, total)``: the bounded influence of the residual
    psi(r_S) / E[psi'], the influence of position (H'H)^-1 h_i w_i, and their
    product.  ``weight_override`` replaces w_i in the position term.
    """
    if not model.spec.robust or model.weights is None:
        raise ConfigError("influence diagnostic needs a model trained in robust (rpm) mode")
    n = model.training_inputs.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"training index {i} out of range [0, {n})")
    c = model.spec.huber_c
    ir = float(huber_psi(model.standardized_residuals[i], c)) / huber_psi_prime_mean(c)
    H = model.design_matrix
    w = model.weights.w[i] if weight_override is None else float(weight_override)
    ip = linalg.solve(H.T @ H, H[i], assume_a="sym") * w
    return ir, ip, ir * ip


def save_model(model: TrainedModel, path) -> None:
    from .dataset import write_text_atomic
    write_text_atomic(path, model.to_json() + "\n")


def load_model(path) -> TrainedModel:
    from .errors import ArtifactIOError
    try:
        with open(path, encoding="utf-8") as fh:
            return TrainedModel.from_json(fh.read())
    except OSError as exc:
        raise ArtifactIOError(f"cannot read model {path}: {exc}") from None
    except (KeyError, json.JSONDecodeError) as exc:
        raise ArtifactIOError(f"{path} is not a valid model file: {exc}") from None

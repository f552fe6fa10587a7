"""Stationary covariance functions and covariance-matrix assembly."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .errors import ConfigError, HyperparameterDomainError, IllConditionedKernelError, InputShapeError

KERNEL_KINDS = ("rbf", "exponential", "matern32", "rational_quadratic")
JITTER_FLOOR = 1e-10
JITTER_CEIL = 1e-4
SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family.

    ``rq_form`` selects the rational-quadratic variant: ``"standard"`` is
    ``tau2 * (1 + d2 / (2 alpha))**-alpha``; ``"composed"`` nests an
    exponential inside, ``tau2 * (1 + exp(-d2 / (2 alpha)))**-alpha``, whose
    value at zero distance is ``tau2 * 2**-alpha`` rather than ``tau2``.
    """
    kind: str = "rbf"
    alpha: float | None = None
    rq_form: str = "standard"

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel {self.kind!r}; choose from {KERNEL_KINDS}")
        if self.kind == "rational_quadratic":
            if self.alpha is None or not self.alpha > 0:
                raise ConfigError("rational_quadratic kernel needs a positive alpha")
            if self.rq_form not in ("standard", "composed"):
                raise ConfigError(f"unknown rational-quadratic form {self.rq_form!r}")
        elif self.alpha is not None:
            raise ConfigError("alpha applies to the rational_quadratic kernel only")

    @property
    def uses_abs(self) -> bool:
        return self.kind == "exponential"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "rq_form": self.rq_form}

    @classmethod
    def from_dict(cls, d) -> "KernelSpec":
        return cls(d["kind"], d.get("alpha"), d.get("rq_form", "standard"))


@dataclass(frozen=True)
class KernelHyperparameters:
    length_scales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        object.__setattr__(self, "length_scales", ls)
        if not np.all(ls > 0) or not np.all(np.isfinite(ls)):
            raise HyperparameterDomainError(f"length scales must be strictly positive, got {ls}")
        if not self.signal_variance > 0:
            raise HyperparameterDomainError(f"signal variance must be > 0, got {self.signal_variance}")
        if not self.noise_variance >= 0:
            raise HyperparameterDomainError(f"noise variance must be >= 0, got {self.noise_variance}")

    def to_log(self) -> np.ndarray:
        """Log-space parameter vector (log l_1..log l_d, log tau2, log sigma_n2)."""
        return np.concatenate([np.log(self.length_scales),
                               [np.log(self.signal_variance), np.log(max(self.noise_variance, 1e-300))]])

    @classmethod
    def from_log(cls, theta) -> "KernelHyperparameters":
        theta = np.asarray(theta, dtype=float)
        return cls(np.exp(theta[:-2]), float(np.exp(theta[-2])), float(np.exp(theta[-1])))

    def to_dict(self) -> dict:
        return {"length_scales": self.length_scales.tolist(),
                "signal_variance": float(self.signal_variance),
                "noise_variance": float(self.noise_variance)}

    @classmethod
    def from_dict(cls, d) -> "KernelHyperparameters":
        return cls(np.asarray(d["length_scales"], float), float(d["signal_variance"]),
                   float(d["noise_variance"]))


def _profile(spec: KernelSpec, dist: np.ndarray, tau2: float) -> np.ndarray:
    """Kernel value from the scaled distance (squared, or L1 for exponential)."""
    if spec.kind == "rbf":
        return tau2 * np.exp(-0.5 * dist)
    if spec.kind == "exponential":
        return tau2 * np.exp(-dist)
    if spec.kind == "matern32":
        r = SQRT3 * np.sqrt(dist)
        return tau2 * (1.0 + r) * np.exp(-r)
    a = spec.alpha
    if spec.rq_form == "standard":
        return tau2 * (1.0 + dist / (2.0 * a)) ** (-a)
    return tau2 * (1.0 + np.exp(-dist / (2.0 * a))) ** (-a)


def grad_factor(spec: KernelSpec, dist: np.ndarray, K: np.ndarray, tau2: float) -> np.ndarray:
    """Matrix G with dK/dlog(l_k) = G * T_k.

    T_k is ``(dx_k / l_k)**2`` for the squared-distance kernels and
    ``|dx_k| / l_k`` for the exponential kernel.
    """
    if spec.kind in ("rbf", "exponential"):
        return K
    if spec.kind == "matern32":
        return 3.0 * tau2 * np.exp(-SQRT3 * np.sqrt(dist))
    a = spec.alpha
    if spec.rq_form == "standard":
        return tau2 * (1.0 + dist / (2.0 * a)) ** (-a - 1.0)
    e = np.exp(-dist / (2.0 * a))
    return -tau2 * (1.0 + e) ** (-a - 1.0) * e


def scaled_distance(X1, X2, spec: KernelSpec, length_scales) -> np.ndarray:
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    ls = np.asarray(length_scales, dtype=float)
    if X1.shape[1] != X2.shape[1]:
        raise InputShapeError(f"column counts differ: {X1.shape[1]} vs {X2.shape[1]}")
    if X1.shape[1] != ls.size:
        raise InputShapeError(f"inputs have {X1.shape[1]} columns but {ls.size} length scales were given")
    if not np.all(ls > 0):
        raise HyperparameterDomainError(f"length scales must be strictly positive, got {ls}")
    metric = "cityblock" if spec.uses_abs else "sqeuclidean"
    return cdist(X1 / ls, X2 / ls, metric=metric)


def kernel_matrix(X1, X2, spec: KernelSpec, hp: KernelHyperparameters) -> np.ndarray:
    """Cross-covariance k0(X1, X2) without any nugget."""
    return _profile(spec, scaled_distance(X1, X2, spec, hp.length_scales), hp.signal_variance)


def kernel_eval(x_i, x_j, spec: KernelSpec, hp: KernelHyperparameters) -> float:
    return float(kernel_matrix(np.ravel(x_i)[None, :], np.ravel(x_j)[None, :], spec, hp)[0, 0])


def add_nugget(K, noise_variance: float, signal_variance: float = 1.0) -> np.ndarray:
    """Return ``K + max(noise_variance, 1e-10 * signal_variance) * I``."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputShapeError(f"nugget needs a square matrix, got shape {K.shape}")
    out = K.copy()
    out[np.diag_indices_from(out)] += max(noise_variance, JITTER_FLOOR * signal_variance)
    return out


def cholesky_jitter(S, signal_variance: float = 1.0) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of S, escalating diagonal jitter on failure.

    Jitter starts at 1e-10 * tau2 and grows tenfold up to 1e-4 * tau2.
    Returns the factor and the extra jitter that was needed (0 if none).
    """
    S = np.asarray(S, dtype=float)
    jitter = 0.0
    step = JITTER_FLOOR * signal_variance
    while True:
        try:
            A = S if jitter == 0.0 else S + jitter * np.eye(S.shape[0])
            return linalg.cholesky(A, lower=True, check_finite=True), jitter
        except (linalg.LinAlgError, ValueError):
            jitter = step if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_CEIL * signal_variance * (1 + 1e-9):
                raise IllConditionedKernelError(
                    "covariance matrix is not positive definite even with "
                    f"{JITTER_CEIL:g}*tau2 diagonal jitter") from None

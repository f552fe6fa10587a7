"""Regression basis h(x) for the GP mean function, and robust input scaling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputShapeError

BASIS_KINDS = ("constant", "linear", "quadratic")
MAD_FACTOR = 1.4826


@dataclass(frozen=True)
class BasisSpec:
    """Basis family and raw input dimension (2p).

    The quadratic family carries pure squares only, so its width is
    ``4p + 1``; there are no cross terms.
    """
    kind: str
    input_dim: int

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ConfigError(f"unknown basis kind {self.kind!r}; choose from {BASIS_KINDS}")
        if self.input_dim < 1:
            raise ConfigError("input_dim must be a positive integer")

    @property
    def q(self) -> int:
        return {"constant": 1, "linear": self.input_dim + 1, "quadratic": 2 * self.input_dim + 1}[self.kind]


def _check(X: np.ndarray, spec: BasisSpec) -> None:
    if X.shape[-1] != spec.input_dim:
        raise InputShapeError(f"input has length {X.shape[-1]}, basis expects {spec.input_dim}")


def build_basis_row(x, spec: BasisSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    _check(x, spec)
    return build_design_matrix(x[None, :], spec)[0]


def build_design_matrix(X, spec: BasisSpec) -> np.ndarray:
    """Stack h(x_i) row-wise into the n x q design matrix H."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InputShapeError(f"design input must be a non-empty 2-D array, got shape {X.shape}")
    _check(X, spec)
    ones = np.ones((X.shape[0], 1))
    if spec.kind == "constant":
        return ones
    if spec.kind == "linear":
        return np.hstack([ones, X])
    return np.hstack([ones, X, X**2])


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine map ``(x - center) / scale`` frozen from training data.

    Columns are centred on the median and scaled by the normalised MAD so
    that gross errors in the training inputs do not distort the map.  A
    column with zero MAD falls back to its standard deviation, then to 1.
    """
    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        center = np.median(X, axis=0)
        scale = MAD_FACTOR * np.median(np.abs(X - center), axis=0)
        std = X.std(axis=0)
        scale = np.where(scale > 0, scale, np.where(std > 0, std, 1.0))
        return cls(center, scale)

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.center.size:
            raise InputShapeError(f"input has {X.shape[-1]} columns, model was trained on {self.center.size}")
        return (X - self.center) / self.scale

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.asarray(d["center"], float), np.asarray(d["scale"], float))

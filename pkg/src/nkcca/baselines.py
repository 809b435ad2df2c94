"""Random-Fourier-feature CCA baseline: explicit feature maps per view
followed by regularized linear CCA."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kcca import total_correlation

__all__ = [
    "RffMap",
    "make_rff_map",
    "rff_features",
    "LinearCcaModel",
    "linear_cca",
    "rcca_fit",
]


@dataclass(frozen=True)
class RffMap:
    """Random cosine feature map z(x) = sqrt(2/D) cos(W x + b) whose inner
    products approximate the RBF kernel in expectation."""

    frequencies: np.ndarray   # D x d, rows ~ N(0, sigma^-2 I)
    phases: np.ndarray        # D, ~ U[0, 2 pi)
    seed: int

    @property
    def n_features(self) -> int:
        return self.frequencies.shape[0]


def make_rff_map(dim: int, n_features: int, sigma: float, seed: int) -> RffMap:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, 1.0 / sigma, size=(n_features, dim))
    b = rng.uniform(0.0, 2.0 * np.pi, size=n_features)
    return RffMap(frequencies=W, phases=b, seed=seed)


def rff_features(rff: RffMap, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != rff.frequencies.shape[1]:
        raise ValueError("dimension mismatch between map and data")
    D = rff.n_features
    return np.sqrt(2.0 / D) * np.cos(X @ rff.frequencies.T + rff.phases)


@dataclass
class LinearCcaModel:
    correlations: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray

    def transform(self, Zx=None, Zy=None):
        out = []
        if Zx is not None:
            out.append((np.asarray(Zx) - self.mean_x) @ self.wx)
        if Zy is not None:
            out.append((np.asarray(Zy) - self.mean_y) @ self.wy)
        return out[0] if len(out) == 1 else tuple(out)


def _inv_sqrt(C: np.ndarray, lam: float) -> tuple[np.ndarray, int]:
    e, V = scipy.linalg.eigh(C)
    e = np.maximum(e, 0.0)
    rank = int(np.sum(e > e.max(initial=0.0) * C.shape[0] * np.finfo(float).eps))
    return (V / np.sqrt(e + lam)) @ V.T, rank


def linear_cca(Zx, Zy, lambda1: float, lambda2: float, L: int) -> LinearCcaModel:
    """Regularized linear CCA on feature matrices.

    Each view is centered and whitened by (Z^T Z / N + lam I)^(-1/2); the
    top-L singular triplets of the whitened cross-covariance give the
    canonical correlations and weights. If fewer than L informative
    directions exist, the model is truncated with a warning.
    """
    Zx = np.atleast_2d(np.asarray(Zx, dtype=float))
    Zy = np.atleast_2d(np.asarray(Zy, dtype=float))
    n = Zx.shape[0]
    if Zy.shape[0] != n:
        raise ValueError("views have different sample counts")
    if n < 2:
        raise ValueError("need at least two samples")
    mean_x = Zx.mean(axis=0)
    mean_y = Zy.mean(axis=0)
    Xc = Zx - mean_x
    Yc = Zy - mean_y
    isx, rank_x = _inv_sqrt(Xc.T @ Xc / n, lambda1)
    isy, rank_y = _inv_sqrt(Yc.T @ Yc / n, lambda2)
    M = isx @ (Xc.T @ Yc / n) @ isy
    U, s, Vt = scipy.linalg.svd(M, full_matrices=False)
    keep = min(L, rank_x, rank_y, int(np.sum(s > 1e-12)))
    if keep < L:
        warnings.warn(f"rank collapse: only {keep} of {L} canonical "
                      "directions are informative", stacklevel=2)
        keep = max(keep, 1)
    corr = np.clip(s[:keep], 0.0, 1.0)
    return LinearCcaModel(correlations=corr, wx=isx @ U[:, :keep],
                          wy=isy @ Vt[:keep].T, mean_x=mean_x, mean_y=mean_y)


def rcca_fit(X_train, Y_train, sigma1: float, sigma2: float, n_features: int,
             lambda1: float, lambda2: float, L: int, seed: int):
    """RFF-CCA pipeline: fit feature maps and linear CCA on training pairs.

    Returns (model, project) where project(X, Y) maps raw test pairs to
    canonical coordinates.
    """
    X_train = np.atleast_2d(np.asarray(X_train, dtype=float))
    Y_train = np.atleast_2d(np.asarray(Y_train, dtype=float))
    map_x = make_rff_map(X_train.shape[1], n_features, sigma1, seed)
    map_y = make_rff_map(Y_train.shape[1], n_features, sigma2, seed + 1)
    model = linear_cca(rff_features(map_x, X_train), rff_features(map_y, Y_train),
                       lambda1, lambda2, L)

    def project(X, Y):
        return model.transform(rff_features(map_x, X), rff_features(map_y, Y))

    return model, project


def rcca_test_correlation(project, X_test, Y_test) -> float:
    px, py = project(X_test, Y_test)
    return total_correlation(px, py)

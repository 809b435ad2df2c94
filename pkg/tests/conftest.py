"""Shared helpers for the test suite."""

import numpy as np

from nkcca.datasets import synthetic_circles
from nkcca.kernels import KernelSpec, gram


def random_psd(rng, n, rank=None, jitter=0.0):
    """Random symmetric PSD matrix with controllable rank and floor."""
    rank = rank or n
    A = rng.normal(size=(n, rank))
    K = A @ A.T / rank
    if jitter:
        K += jitter * np.eye(n)
    return 0.5 * (K + K.T)


def ring_gram(n, seed, sigma=1.0, view=1):
    """RBF Gram matrix of one view of the synthetic ring data."""
    ds = synthetic_circles(n, seed)
    X = ds.X if view == 1 else ds.Y
    return gram(KernelSpec(sigma=sigma), X).entries


def centering_matrix(n):
    return np.eye(n) - np.ones((n, n)) / n

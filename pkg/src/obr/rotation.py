"""Randomized Hadamard rotations applied on the input-channel axis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ShapeError
from .tensor_store import as_matrix

ORTHOGONALITY_TOL = 1e-6


@dataclass(frozen=True)
class RotationSpec:
    kind: str = "hadamard"
    seed: int = 0
    dim: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("none", "hadamard"):
            raise ValueError(f"unknown rotation kind {self.kind!r}")

    def with_dim(self, dim):
        return RotationSpec(self.kind, self.seed, dim)


def is_power_of_two(n):
    return n > 0 and (n & (n - 1)) == 0


def random_signs(dim, seed):
    rng = np.random.default_rng(seed)
    return rng.choice(np.array([-1.0, 1.0]), size=dim)


def build_rotation(spec):
    """Return ``D H_n / sqrt(n)`` for a Hadamard spec, or the identity for ``none``."""
    if spec.dim is None:
        raise ValueError("rotation dimension not set")
    n = int(spec.dim)
    if spec.kind == "none":
        return np.eye(n)
    return signed_hadamard(n, random_signs(n, spec.seed))


def signed_hadamard(n, signs=None):
    """Normalized Sylvester Hadamard matrix with rows scaled by ``signs``."""
    if not is_power_of_two(n):
        raise ShapeError(f"Hadamard rotation needs a power-of-two dimension, got {n}")
    h = scipy.linalg.hadamard(n).astype(np.float64) / np.sqrt(n)
    if signs is None:
        return h
    return np.asarray(signs, dtype=np.float64)[:, None] * h


def check_orthogonal(q, tol=ORTHOGONALITY_TOL):
    q = as_matrix(q, "rotation")
    if q.shape[0] != q.shape[1]:
        raise ShapeError(f"rotation must be square, got {q.shape}")
    err = np.max(np.abs(q.T @ q - np.eye(q.shape[0])))
    if err > tol:
        raise ValueError(f"rotation is not orthogonal (max |Q^T Q - I| = {err:.3g})")
    return q


def rotate_pair(w, x, q):
    """Return ``(W Q, Q^T X)``; the product of the pair equals ``W X``."""
    w = as_matrix(w, "weights")
    x = as_matrix(x, "activations")
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ShapeError(f"rotation must be square, got {q.shape}")
    if w.shape[1] != q.shape[0] or x.shape[0] != q.shape[0]:
        raise ShapeError(
            f"rotation {q.shape} does not match weights {w.shape} and activations {x.shape}"
        )
    return w @ q, q.T @ x

"""Hessian proxy and activation statistics from calibration activations."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .tensor_store import as_matrix

log = logging.getLogger(__name__)

DEFAULT_DAMP_RATIO = 0.01
MAX_DAMP_RETRIES = 10


@dataclass(frozen=True)
class Hessian:
    """Damped curvature ``2 X X^T + damp_lambda * I`` of one layer's inputs."""

    h: np.ndarray
    damp_lambda: float
    source_samples: int

    @property
    def dim(self):
        return self.h.shape[0]

    def inverse(self):
        """Full inverse via Cholesky; used by the second-order pruning score."""
        c = scipy.linalg.cho_factor(self.h, lower=True)
        inv = scipy.linalg.cho_solve(c, np.eye(self.dim))
        return 0.5 * (inv + inv.T)


@dataclass(frozen=True)
class ActivationStats:
    column_norms: np.ndarray


def _is_pd(h):
    """Cholesky succeeds with every pivot above rounding level."""
    try:
        chol = scipy.linalg.cholesky(h, lower=True)
    except np.linalg.LinAlgError:
        return False
    floor = h.shape[0] * np.finfo(np.float64).eps * max(float(np.max(np.diag(h))), 0.0)
    return bool(np.min(np.diag(chol)) ** 2 > floor)


def build_hessian(x, damp_ratio=DEFAULT_DAMP_RATIO):
    """Build ``H = 2 X X^T + lambda I`` from activations ``x`` (C_in x L).

    ``lambda`` is ``damp_ratio`` times the mean diagonal of ``2 X X^T`` (or
    ``damp_ratio`` itself when that mean is zero). If the result is not
    positive definite the damping is doubled, up to ten times.
    """
    x = as_matrix(x, "calibration activations")
    if x.shape[1] < 1:
        raise ValueError("calibration needs at least one sample")
    if damp_ratio < 0:
        raise ValueError(f"damp_ratio must be >= 0, got {damp_ratio}")
    raw = 2.0 * (x @ x.T)
    raw = 0.5 * (raw + raw.T)
    mean_diag = float(np.mean(np.diag(raw)))
    lam = damp_ratio * mean_diag if mean_diag > 0 else float(damp_ratio)
    n = raw.shape[0]
    h = raw + lam * np.eye(n)
    if _is_pd(h):
        return Hessian(h, lam, x.shape[1])
    # escalate from a nonzero floor so a zero damp_ratio can still recover
    if lam <= 0:
        lam = 1e-8 * mean_diag if mean_diag > 0 else 1e-8
    for _ in range(MAX_DAMP_RETRIES):
        h = raw + lam * np.eye(n)
        if _is_pd(h):
            log.info("Hessian damping escalated to %g", lam)
            return Hessian(h, lam, x.shape[1])
        lam *= 2.0
    raise NumericalError("Hessian not positive definite after damping retries", stage="hessian")


def activation_stats(x):
    """Euclidean norm of every input channel (row of ``x``) over the samples."""
    x = as_matrix(x, "calibration activations")
    return ActivationStats(np.sqrt(np.sum(x * x, axis=1)))


def gen_calibration(c_in, n_samples, correlation=0.0, seed=0):
    """Synthetic activations with unit variance and equicorrelation ``correlation``.

    Each column is drawn from N(0, (1 - rho) I + rho 11^T).
    """
    if c_in < 1 or n_samples < 1:
        raise ValueError("c_in and n_samples must be >= 1")
    if not 0.0 <= correlation < 1.0:
        raise ValueError(f"correlation must lie in [0, 1), got {correlation}")
    rng = np.random.default_rng(seed)
    independent = rng.standard_normal((c_in, n_samples))
    shared = rng.standard_normal((1, n_samples))
    return np.sqrt(1.0 - correlation) * independent + np.sqrt(correlation) * shared

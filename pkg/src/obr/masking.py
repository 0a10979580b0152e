"""Pruning scores and binary masks (unstructured per row, or N:M)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ShapeError
from .tensor_store import as_matrix

METRICS = ("magnitude", "wanda", "sparsegpt", "random")


@dataclass(frozen=True)
class Unstructured:
    ratio: float

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"sparsity ratio must lie in [0, 1], got {self.ratio}")

    def zeros_per_row(self, c_in):
        # the small slack keeps e.g. 0.3 * 10 from flooring to 2
        return int(math.floor(self.ratio * c_in + 1e-9))

    def __str__(self):
        return f"unstructured:{self.ratio:g}"


@dataclass(frozen=True)
class NM:
    """``n`` zeros in every aligned group of ``m`` consecutive columns."""

    n: int
    m: int

    def __post_init__(self):
        if not (self.m >= 1 and 0 <= self.n <= self.m):
            raise ValueError(f"invalid N:M pattern {self.n}:{self.m}")

    def check_width(self, c_in):
        if c_in % self.m:
            raise ShapeError(
                f"{self} pattern needs C_in divisible by {self.m}, got C_in={c_in}"
            )

    def __str__(self):
        return f"{self.n}:{self.m}"


Pattern = Union[Unstructured, NM]


def parse_pattern(text):
    """Parse ``"unstructured:0.5"``, a bare ratio ``"0.5"``, or ``"n:m"`` such as ``"2:4"``."""
    if isinstance(text, (Unstructured, NM)):
        return text
    text = str(text).strip()
    if text.startswith("unstructured:"):
        return Unstructured(float(text.split(":", 1)[1]))
    if ":" in text:
        n, m = text.split(":", 1)
        return NM(int(n), int(m))
    return Unstructured(float(text))


@dataclass(frozen=True)
class PruneMask:
    m: np.ndarray
    pattern: Pattern
    metric: str = "magnitude"

    @property
    def sparsity(self):
        return float(np.mean(self.m == 0)) if self.m.size else 0.0


def prune_scores(w, hessian=None, stats=None, metric="magnitude", seed=0):
    """Importance of each weight; larger means keep.

    ``magnitude``: |W|. ``wanda``: |W| times the input-channel activation norm.
    ``sparsegpt``: W^2 / diag(H^-1). ``random``: seeded uniform draws.
    """
    w = as_matrix(w, "weights")
    if metric == "magnitude":
        return np.abs(w)
    if metric == "wanda":
        if stats is None:
            raise ValueError("wanda scores need activation statistics")
        norms = np.asarray(stats.column_norms, dtype=np.float64)
        if norms.shape != (w.shape[1],):
            raise ShapeError(f"activation norms {norms.shape} do not match C_in={w.shape[1]}")
        return np.abs(w) * norms[None, :]
    if metric == "sparsegpt":
        if hessian is None:
            raise ValueError("sparsegpt scores need a Hessian")
        if hessian.dim != w.shape[1]:
            raise ShapeError(f"Hessian dim {hessian.dim} does not match C_in={w.shape[1]}")
        return w ** 2 / np.diag(hessian.inverse())[None, :]
    if metric == "random":
        return np.random.default_rng(seed).random(w.shape)
    raise ValueError(f"unknown mask metric {metric!r}; choose from {METRICS}")


def _keep_top(scores, keep):
    """0/1 mask keeping the ``keep`` largest entries of each row; ties keep lower indices."""
    rows, cols = scores.shape
    order = np.argsort(-scores, axis=1, kind="stable")
    mask = np.zeros((rows, cols), dtype=np.int8)
    np.put_along_axis(mask, order[:, :keep], 1, axis=1)
    return mask


def build_mask(scores, pattern, metric="magnitude"):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ShapeError(f"scores must be 2-D, got shape {scores.shape}")
    if np.any(np.isnan(scores)):
        raise ValueError("scores contain NaN")
    pattern = parse_pattern(pattern)
    rows, cols = scores.shape
    if isinstance(pattern, Unstructured):
        mask = _keep_top(scores, cols - pattern.zeros_per_row(cols))
    else:
        pattern.check_width(cols)
        groups = scores.reshape(rows * cols // pattern.m, pattern.m)
        mask = _keep_top(groups, pattern.m - pattern.n).reshape(rows, cols)
    return PruneMask(mask, pattern, metric)


def apply_mask(w, mask):
    m = mask.m if isinstance(mask, PruneMask) else np.asarray(mask)
    return np.where(m != 0, w, 0.0)

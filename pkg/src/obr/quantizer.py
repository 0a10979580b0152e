"""Symmetric per-row integer quantizers: round-to-nearest and GPTQ."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError, ShapeError
from .tensor_store import as_matrix


@dataclass(frozen=True)
class QuantizerSpec:
    bits: int = 4
    kind: str = "rtn"
    symmetric: bool = True

    def __post_init__(self):
        if not 2 <= self.bits <= 8:
            raise ValueError(f"bits must lie in [2, 8], got {self.bits}")
        if self.kind not in ("rtn", "gptq"):
            raise ValueError(f"unknown quantizer kind {self.kind!r}")
        if not self.symmetric:
            raise ValueError("only symmetric quantization is supported")

    @property
    def qmax(self):
        return 2 ** (self.bits - 1) - 1


@dataclass(frozen=True)
class QuantizedMatrix:
    codes: np.ndarray
    scales: np.ndarray
    bits: int

    def dequantize(self):
        return self.codes * self.scales[:, None]

    @property
    def shape(self):
        return self.codes.shape


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def row_grid(w, qmax):
    """Per-row ``(max|w|, scale)``; an all-zero row gets ``max = qmax`` so its scale is 1."""
    amax = np.max(np.abs(w), axis=1) if w.shape[1] else np.zeros(w.shape[0])
    amax = np.where(amax > 0, amax, float(qmax))
    return amax, amax / qmax


def _codes_on_grid(w, amax, qmax):
    # w * qmax / amax rather than w / scale: exact at half-steps such as 0.5 * 7 / 1
    return np.clip(round_half_away(w * qmax / amax), -qmax, qmax)


def rtn_quantize(w, spec=QuantizerSpec()):
    w = as_matrix(w, "weights")
    amax, scales = row_grid(w, spec.qmax)
    codes = _codes_on_grid(w, amax[:, None], spec.qmax)
    return QuantizedMatrix(codes.astype(np.int64), scales, spec.bits)


def quant_error(w, spec=QuantizerSpec()):
    """``w - dequant(rtn(w))``; always on the RTN grid, whatever ``spec.kind`` says."""
    w = as_matrix(w, "weights")
    return w - rtn_quantize(w, spec).dequantize()


def gptq_quantize(w, hessian, spec=QuantizerSpec(kind="gptq"), frozen=None):
    """Column-sequential quantization with inverse-Hessian error feedback.

    The per-row grid is fixed from ``w`` before any update. Column ``j`` is
    rounded, its error is divided by the ``j``-th diagonal of the upper
    Cholesky factor of ``H^-1`` and pushed onto columns ``k > j`` through that
    factor's ``j``-th row. Entries where ``frozen`` is 0 stay exactly zero and
    are never updated.
    """
    w = as_matrix(w, "weights")
    rows, cols = w.shape
    h = np.asarray(hessian.h if hasattr(hessian, "h") else hessian, dtype=np.float64)
    if h.shape != (cols, cols):
        raise ShapeError(f"Hessian {h.shape} does not match C_in={cols}")
    keep = None
    if frozen is not None:
        keep = np.asarray(frozen.m if hasattr(frozen, "m") else frozen) != 0
        if keep.shape != w.shape:
            raise ShapeError(f"frozen mask {keep.shape} does not match weights {w.shape}")
        w = np.where(keep, w, 0.0)
    try:
        h_inv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(h, lower=True), np.eye(cols))
        u = scipy.linalg.cholesky(0.5 * (h_inv + h_inv.T), lower=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Cholesky of the Hessian failed", stage="gptq") from exc

    qmax = spec.qmax
    amax, scales = row_grid(w, qmax)
    work = w.copy()
    codes = np.zeros((rows, cols))
    for j in range(cols):
        col = work[:, j]
        if keep is not None:
            col = np.where(keep[:, j], col, 0.0)
        q = _codes_on_grid(col, amax, qmax)
        codes[:, j] = q
        err = (col - q * scales) / u[j, j]
        if j + 1 < cols:
            work[:, j + 1:] -= np.outer(err, u[j, j + 1:])
            if keep is not None:
                work[:, j + 1:] = np.where(keep[:, j + 1:], work[:, j + 1:], 0.0)
    return QuantizedMatrix(codes.astype(np.int64), scales, spec.bits)


def quantize(w, spec, hessian=None, frozen=None):
    if spec.kind == "rtn":
        return rtn_quantize(w, spec)
    if hessian is None:
        raise ValueError("gptq quantization needs a Hessian")
    return gptq_quantize(w, hessian, spec, frozen)

"""Closed-form group error compensation for a single weight row.

Every solve minimizes ``J = 1/2 dw H dw^T`` over the retained coordinates
``dw_R`` while the evicted coordinates carry a fixed perturbation ``e_E``
(compressed minus original). The minimizer solves ``H_RR dw_R = -H_RE e_E``
and is added to the retained weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .quantizer import QuantizerSpec, quant_error

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RowPartition:
    retain: np.ndarray
    evict: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.retain, dtype=np.int64)
        e = np.asarray(self.evict, dtype=np.int64)
        if np.intersect1d(r, e).size:
            raise ValueError("retain and evict sets overlap")
        object.__setattr__(self, "retain", r)
        object.__setattr__(self, "evict", e)

    @classmethod
    def from_mask(cls, mask_row):
        mask_row = np.asarray(mask_row)
        return cls(np.flatnonzero(mask_row != 0), np.flatnonzero(mask_row == 0))


@dataclass(frozen=True)
class RowCompensation:
    """``delta`` is a full-length row, nonzero only on the retain set."""

    delta: np.ndarray
    objective_before: float
    objective_after: float


def _h(hessian):
    return hessian.h if hasattr(hessian, "h") else np.asarray(hessian, dtype=np.float64)


def row_objective(dw, hessian):
    """``1/2 dw H dw^T`` for a full-length perturbation row."""
    dw = np.asarray(dw, dtype=np.float64)
    return 0.5 * float(dw @ _h(hessian) @ dw)


def solve_compensation(hessian, part, e_evict, row=None, stage="compensation"):
    h = _h(hessian)
    n = h.shape[0]
    r, e_idx = part.retain, part.evict
    e_evict = np.asarray(e_evict, dtype=np.float64)
    if e_evict.shape != (e_idx.size,):
        raise ValueError(f"error vector has shape {e_evict.shape}, evict set has {e_idx.size} entries")
    delta = np.zeros(n)
    before = 0.5 * float(e_evict @ h[np.ix_(e_idx, e_idx)] @ e_evict) if e_idx.size else 0.0
    if e_idx.size == 0 or r.size == 0:
        if r.size == 0 and e_idx.size:
            log.debug("empty retain set; no compensation (row=%s, stage=%s)", row, stage)
        return RowCompensation(delta, before, before)
    h_rr = h[np.ix_(r, r)]
    b = h[np.ix_(r, e_idx)] @ e_evict
    try:
        factor = scipy.linalg.cho_factor(h_rr, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Cholesky of H_RR failed", row=row, stage=stage) from exc
    delta[r] = -scipy.linalg.cho_solve(factor, b, check_finite=False)
    full = delta.copy()
    full[e_idx] = e_evict
    after = row_objective(full, h)
    return RowCompensation(delta, before, after)


def prune_compensation(w_row, mask_row, hessian, row=None):
    """Move the pruned weights' contribution onto the kept ones.

    Returns the compensation and the compensated sparse row ``w_bar``.
    """
    w_row = np.asarray(w_row, dtype=np.float64)
    part = RowPartition.from_mask(mask_row)
    # zeroing the evicted weights perturbs them by -w_E
    comp = solve_compensation(hessian, part, -w_row[part.evict], row=row, stage="prune")
    w_bar = np.zeros_like(w_row)
    w_bar[part.retain] = w_row[part.retain] + comp.delta[part.retain]
    return comp, w_bar


def split_retained(retained, alpha):
    """First ``floor(alpha |R1|)`` retained indices (ascending) are evicted."""
    retained = np.sort(np.asarray(retained, dtype=np.int64))
    t = int(np.floor(alpha * retained.size + 1e-9))
    return RowPartition(retained[t:], retained[:t])


def quant_compensation(w_bar_row, retained, alpha, hessian, spec=QuantizerSpec(), row=None):
    """Compensate the RTN error of the evicted part of ``retained`` on the rest.

    The quantization grid is the row's RTN grid over all retained values.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    w_bar_row = np.asarray(w_bar_row, dtype=np.float64)
    part = split_retained(retained, alpha)
    n = w_bar_row.size
    if part.evict.size == 0:
        return RowCompensation(np.zeros(n), 0.0, 0.0)
    values = np.zeros(n)
    values[retained] = w_bar_row[retained]
    # rounding perturbs the evicted weights by quant(w) - w
    err = quant_error(values[None, :], spec)[0]
    return solve_compensation(hessian, part, -err[part.evict], row=row, stage="quant")

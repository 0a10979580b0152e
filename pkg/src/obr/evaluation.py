"""Reconstruction errors, sparsity audits and baseline comparisons."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .masking import NM, Unstructured, parse_pattern
from .tensor_store import as_matrix

EPS = 1e-30


@dataclass
class EvalReport:
    rel_recon_error: float
    frob_output_error: float
    achieved_sparsity: float
    pattern_valid: bool
    natural_zero_fraction: float
    per_row_objectives: list = field(default_factory=list)
    baseline_deltas: dict = field(default_factory=dict)
    rel_recon_error_unrotated: Optional[float] = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


def reconstruction_error(w_ref, w_hat, x):
    """``||(W_hat - W) X||_F / max(||W X||_F, 1e-30)``."""
    w_ref = as_matrix(w_ref, "reference weights")
    w_hat = as_matrix(w_hat, "compressed weights")
    x = as_matrix(x, "activations")
    ref = w_ref @ x
    return float(np.linalg.norm((w_hat - w_ref) @ x) / max(np.linalg.norm(ref), EPS))


def output_error(w_ref, w_hat, x):
    return float(np.linalg.norm((np.asarray(w_hat) - np.asarray(w_ref)) @ np.asarray(x)))


def per_row_output_objectives(w_ref, w_hat, x):
    """Squared output error of each row, i.e. ``1/2 dw (2 X X^T) dw^T``."""
    d = (np.asarray(w_hat) - np.asarray(w_ref)) @ np.asarray(x)
    return np.sum(d * d, axis=1)


def group_zero_counts(w, m):
    w = np.asarray(w)
    rows, cols = w.shape
    return np.sum(w.reshape(rows, cols // m, m) == 0, axis=2)


def sparsity_audit(w, pattern=None):
    """Return ``(achieved_sparsity, pattern_valid)``.

    N:M groups are valid with at least ``n`` zeros; unstructured rows with at
    least ``floor(ratio * C_in)`` zeros. Without a pattern only sparsity is measured.
    """
    w = np.asarray(w)
    achieved = float(np.mean(w == 0)) if w.size else 0.0
    if pattern is None:
        return achieved, True
    pattern = parse_pattern(pattern)
    rows, cols = w.shape
    if isinstance(pattern, NM):
        if cols % pattern.m:
            return achieved, False
        return achieved, bool(np.all(group_zero_counts(w, pattern.m) >= pattern.n))
    need = pattern.zeros_per_row(cols)
    return achieved, bool(np.all(np.sum(w == 0, axis=1) >= need))


def natural_sparsity(q):
    codes = np.asarray(q.codes if hasattr(q, "codes") else q)
    return float(np.mean(codes == 0)) if codes.size else 0.0


def build_report(w_ref, weights, x, pattern=None, codes=None, rotation=None,
                 w_orig=None, x_orig=None):
    """Assemble an :class:`EvalReport` for compressed ``weights`` against ``w_ref`` on ``x``.

    With ``rotation`` and the unrotated ``w_orig``/``x_orig``, the error is also
    measured in the original basis using ``weights @ rotation.T``.
    """
    achieved, valid = sparsity_audit(weights, pattern)
    unrotated = None
    if rotation is not None and w_orig is not None and x_orig is not None:
        unrotated = reconstruction_error(w_orig, np.asarray(weights) @ np.asarray(rotation).T, x_orig)
    return EvalReport(
        rel_recon_error=reconstruction_error(w_ref, weights, x),
        frob_output_error=output_error(w_ref, weights, x),
        achieved_sparsity=achieved,
        pattern_valid=valid,
        natural_zero_fraction=natural_sparsity(codes if codes is not None else weights),
        per_row_objectives=[float(v) for v in per_row_output_objectives(w_ref, weights, x)],
        rel_recon_error_unrotated=unrotated,
    )


def compare_baselines(w, x, config, rotation=None):
    """Run no-compensation prune+RTN, OBR with RTN and OBR with GPTQ on the same inputs.

    Returns the report for ``config`` with ``baseline_deltas`` holding each
    method's reconstruction error divided by the no-compensation error.
    """
    from . import pipeline

    rtn = replace(config.quantizer, kind="rtn")
    gptq = replace(config.quantizer, kind="gptq")
    naive = pipeline.compress_baseline(w, x, replace(config, quantizer=rtn), rotation=rotation)
    obr_rtn = pipeline.compress_matrix(w, x, replace(config, quantizer=rtn), rotation=rotation)
    obr_gptq = pipeline.compress_matrix(w, x, replace(config, quantizer=gptq), rotation=rotation)
    base = max(naive.report.rel_recon_error, EPS)
    report = obr_gptq.report if config.quantizer.kind == "gptq" else obr_rtn.report
    report = replace(report, baseline_deltas={
        "no_compensation": naive.report.rel_recon_error / base,
        "obr_rtn": obr_rtn.report.rel_recon_error / base,
        "obr_gptq": obr_gptq.report.rel_recon_error / base,
    })
    return report

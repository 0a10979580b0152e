"""End-to-end compression of one weight matrix or a stack of linear layers.

``W_hat = quant(prune(rotate(W)) + dW_obr)`` where ``dW_obr`` is the sum of
the pruning compensation and the quantization compensation of every row.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import core
from .calibration import DEFAULT_DAMP_RATIO, Hessian, activation_stats, build_hessian
from .errors import NumericalError, ShapeError
from .evaluation import EvalReport, build_report
from .masking import METRICS, PruneMask, Unstructured, build_mask, parse_pattern, prune_scores
from .quantizer import QuantizedMatrix, QuantizerSpec, quantize
from .rotation import RotationSpec, build_rotation, check_orthogonal, rotate_pair
from .tensor_store import as_matrix

log = logging.getLogger(__name__)

MODES = ("joint", "prune_only", "quant_only")
PROPAGATE = ("compressed", "original")


@dataclass(frozen=True)
class MaskConfig:
    metric: str = "wanda"
    pattern: object = Unstructured(0.5)

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown mask metric {self.metric!r}")
        object.__setattr__(self, "pattern", parse_pattern(self.pattern))


@dataclass(frozen=True)
class PipelineConfig:
    rotation: RotationSpec = field(default_factory=RotationSpec)
    mask: MaskConfig = field(default_factory=MaskConfig)
    quantizer: QuantizerSpec = field(default_factory=QuantizerSpec)
    alpha: float = 0.5
    damp_ratio: float = DEFAULT_DAMP_RATIO
    mode: str = "joint"
    propagate: str = "compressed"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.damp_ratio < 0:
            raise ValueError(f"damp_ratio must be >= 0, got {self.damp_ratio}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.propagate not in PROPAGATE:
            raise ValueError(f"unknown propagate {self.propagate!r}; choose from {PROPAGATE}")

    def to_dict(self):
        return {
            "rotation": {"kind": self.rotation.kind, "seed": self.rotation.seed},
            "mask": {"metric": self.mask.metric, "pattern": str(self.mask.pattern)},
            "quantizer": {"kind": self.quantizer.kind, "bits": self.quantizer.bits},
            "alpha": self.alpha,
            "damp_ratio": self.damp_ratio,
            "mode": self.mode,
            "propagate": self.propagate,
            "seed": self.seed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data):
        """Build from nested (``{"rotation": {"kind": ...}}``) or dotted (``"rotation.kind"``) keys."""
        flat = {}
        for key, value in data.items():
            if isinstance(value, dict):
                for sub, v in value.items():
                    flat[f"{key}.{sub}"] = v
            else:
                flat[key] = value
        known = {
            "rotation.kind", "rotation.seed", "mask.metric", "mask.pattern",
            "quantizer.kind", "quantizer.bits", "alpha", "damp_ratio", "mode",
            "propagate", "seed",
        }
        unknown = set(flat) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = cls()
        seed = int(flat.get("seed", d.seed))
        return cls(
            rotation=RotationSpec(flat.get("rotation.kind", d.rotation.kind),
                                  int(flat.get("rotation.seed", seed))),
            mask=MaskConfig(flat.get("mask.metric", d.mask.metric),
                            flat.get("mask.pattern", d.mask.pattern)),
            quantizer=QuantizerSpec(int(flat.get("quantizer.bits", d.quantizer.bits)),
                                    flat.get("quantizer.kind", d.quantizer.kind)),
            alpha=float(flat.get("alpha", d.alpha)),
            damp_ratio=float(flat.get("damp_ratio", d.damp_ratio)),
            mode=flat.get("mode", d.mode),
            propagate=flat.get("propagate", d.propagate),
            seed=seed,
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class CompressionResult:
    """Output of one matrix compression, in the rotated basis.

    ``weights`` holds the final real-valued weights (dequantized codes, or the
    compensated sparse weights for ``prune_only``). ``objectives`` has one
    ``(before, after)`` pair per row: the summed objectives of that row's
    compensation solves without and with compensation.
    """

    w_hat: Optional[QuantizedMatrix]
    weights: np.ndarray
    mask: Optional[PruneMask]
    delta_prune: np.ndarray
    delta_quant: np.ndarray
    objectives: np.ndarray
    rotation: np.ndarray
    hessian: Hessian
    w_rotated: np.ndarray
    report: EvalReport
    pre_quant: np.ndarray = None

    @property
    def delta_obr(self):
        return self.delta_prune + self.delta_quant

    def unrotated_weights(self):
        """Weights that act directly on unrotated inputs: ``weights @ Q^T``."""
        return self.weights @ self.rotation.T


def _prepare(w, x, config, rotation=None):
    w = as_matrix(w, "weights")
    x = as_matrix(x, "calibration activations")
    if w.shape[1] != x.shape[0]:
        raise ShapeError(f"weights have C_in={w.shape[1]} but activations have {x.shape[0]} rows")
    if rotation is None:
        q = build_rotation(config.rotation.with_dim(w.shape[1]))
    else:
        q = check_orthogonal(rotation)
    w_r, x_r = rotate_pair(w, x, q)
    hessian = build_hessian(x_r, config.damp_ratio)
    return w, x, w_r, x_r, q, hessian


def _make_mask(w_r, x_r, hessian, config):
    scores = prune_scores(w_r, hessian, activation_stats(x_r), config.mask.metric,
                          seed=config.seed)
    return build_mask(scores, config.mask.pattern, config.mask.metric)


def _row_worker(w_r, mask_m, hessian, alpha, spec, do_prune, do_quant):
    n = w_r.shape[1]

    def run(i):
        try:
            w_row = w_r[i]
            if do_prune:
                pc, w_bar = core.prune_compensation(w_row, mask_m[i], hessian, row=i)
            else:
                pc = core.RowCompensation(np.zeros(n), 0.0, 0.0)
                w_bar = w_row.copy()
            if do_quant:
                retained = np.flatnonzero(mask_m[i] != 0)
                qc = core.quant_compensation(w_bar, retained, alpha, hessian, spec, row=i)
            else:
                qc = core.RowCompensation(np.zeros(n), 0.0, 0.0)
        except NumericalError:
            raise
        except np.linalg.LinAlgError as exc:
            raise NumericalError(str(exc), row=i, stage="compensation") from exc
        return i, pc, qc

    return run


def compensate_rows(w_r, mask_m, hessian, alpha, spec, do_prune=True, do_quant=True,
                    threads=None):
    """Per-row compensation; rows are independent and may run on ``threads`` workers."""
    rows, cols = w_r.shape
    delta_prune = np.zeros((rows, cols))
    delta_quant = np.zeros((rows, cols))
    objectives = np.zeros((rows, 2))
    run = _row_worker(w_r, mask_m, hessian, alpha, spec, do_prune, do_quant)
    if threads and threads > 1 and rows > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(rows)))
    else:
        results = [run(i) for i in range(rows)]
    degenerate = 0
    for i, pc, qc in results:
        delta_prune[i] = pc.delta
        delta_quant[i] = qc.delta
        objectives[i] = (pc.objective_before + qc.objective_before,
                         pc.objective_after + qc.objective_after)
        if do_prune and not np.any(mask_m[i]):
            degenerate += 1
    if degenerate:
        log.info("%d fully pruned rows received no compensation", degenerate)
    return delta_prune, delta_quant, objectives


def _finish(w, x, w_r, x_r, q, hessian, config, mask, delta_prune, delta_quant, objectives,
            quantized=True, pre_quant=None):
    keep = mask.m if mask is not None else None
    base = w_r if keep is None else np.where(keep != 0, w_r, 0.0)
    pre = base + delta_prune + delta_quant if pre_quant is None else pre_quant
    w_hat = None
    if quantized:
        w_hat = quantize(pre, config.quantizer, hessian=hessian, frozen=keep)
        weights = w_hat.dequantize()
        if keep is not None:
            weights = np.where(keep != 0, weights, 0.0)
    else:
        weights = pre
    pattern = mask.pattern if mask is not None else None
    report = build_report(
        w_r, weights, x_r, pattern=pattern,
        codes=w_hat.codes if w_hat is not None else None,
        rotation=q, w_orig=w, x_orig=x,
    )
    return CompressionResult(
        w_hat=w_hat, weights=weights, mask=mask, delta_prune=delta_prune,
        delta_quant=delta_quant, objectives=objectives, rotation=q, hessian=hessian,
        w_rotated=w_r, report=report, pre_quant=pre,
    )


def compress_joint(w, x, config, rotation=None, threads=None):
    w, x, w_r, x_r, q, hessian = _prepare(w, x, config, rotation)
    mask = _make_mask(w_r, x_r, hessian, config)
    dp, dq, obj = compensate_rows(w_r, mask.m, hessian, config.alpha, config.quantizer,
                                  threads=threads)
    return _finish(w, x, w_r, x_r, q, hessian, config, mask, dp, dq, obj)


def compress_prune_only(w, x, config, rotation=None, threads=None):
    """Mask plus pruning compensation; the result stays real-valued."""
    w, x, w_r, x_r, q, hessian = _prepare(w, x, config, rotation)
    mask = _make_mask(w_r, x_r, hessian, config)
    dp, dq, obj = compensate_rows(w_r, mask.m, hessian, config.alpha, config.quantizer,
                                  do_quant=False, threads=threads)
    return _finish(w, x, w_r, x_r, q, hessian, config, mask, dp, dq, obj, quantized=False)


def compress_quant_only(w, x, config, rotation=None, threads=None):
    """Quantization compensation over all columns, then the final quantizer."""
    w, x, w_r, x_r, q, hessian = _prepare(w, x, config, rotation)
    full = np.ones(w_r.shape, dtype=np.int8)
    dp, dq, obj = compensate_rows(w_r, full, hessian, config.alpha, config.quantizer,
                                  do_prune=False, threads=threads)
    return _finish(w, x, w_r, x_r, q, hessian, config, None, dp, dq, obj)


def compress_matrix(w, x, config=None, rotation=None, threads=None):
    """Compress ``w`` (C_out x C_in) calibrated on ``x`` (C_in x L) per ``config.mode``.

    ``rotation`` overrides ``config.rotation`` with a given orthogonal matrix.
    All outputs are in the rotated basis.
    """
    config = config or PipelineConfig()
    fn = {
        "joint": compress_joint,
        "prune_only": compress_prune_only,
        "quant_only": compress_quant_only,
    }[config.mode]
    return fn(w, x, config, rotation=rotation, threads=threads)


def compress_baseline(w, x, config=None, rotation=None, threads=None):
    """Same rotation, mask and quantizer as :func:`compress_matrix` but no compensation."""
    config = config or PipelineConfig()
    w, x, w_r, x_r, q, hessian = _prepare(w, x, config, rotation)
    mask = None if config.mode == "quant_only" else _make_mask(w_r, x_r, hessian, config)
    zeros = np.zeros_like(w_r)
    obj = np.zeros((w_r.shape[0], 2))
    return _finish(w, x, w_r, x_r, q, hessian, config, mask, zeros, zeros.copy(), obj,
                   quantized=config.mode != "prune_only")


def compress_stack(layers, x0, config=None, compressor=None, threads=None):
    """Compress a chain of linear layers ``y = W_k ... W_1 x0`` one layer at a time.

    Layer ``i`` uses rotation seed ``config.rotation.seed + i``. Its calibration
    input is the previous layer's compressed output (``propagate="compressed"``)
    or the uncompressed output (``"original"``).
    """
    config = config or PipelineConfig()
    compressor = compressor or compress_matrix
    layers = [as_matrix(w, f"layer {i}") for i, w in enumerate(layers)]
    x0 = as_matrix(x0, "calibration activations")
    prev = x0.shape[0]
    for i, w in enumerate(layers):
        if w.shape[1] != prev:
            raise ShapeError(f"layer {i} expects {w.shape[1]} inputs, previous layer gives {prev}")
        prev = w.shape[0]
    x_comp = x0
    x_orig = x0
    results = []
    for i, w in enumerate(layers):
        cfg = replace(config, rotation=replace(config.rotation, seed=config.rotation.seed + i))
        x_in = x_comp if config.propagate == "compressed" else x_orig
        res = compressor(w, x_in, cfg, threads=threads)
        results.append(res)
        x_comp = res.unrotated_weights() @ x_comp
        x_orig = w @ x_orig
    return results


def stack_forward(weights, x):
    for w in weights:
        x = w @ x
    return x

"""
Compressing a stack of linear layers
====================================

Each layer is calibrated on the output of the already-compressed layers
before it (``propagate="compressed"``) or on the dense outputs
(``"original"``).
"""

import numpy as np

from obr import PipelineConfig, compress_baseline, compress_stack, gen_calibration
from obr.pipeline import stack_forward

rng = np.random.default_rng(7)
layers = [rng.standard_normal((64, 64)) / 8 for _ in range(3)]
x = gen_calibration(64, 512, 0.8, seed=8)
reference = stack_forward(layers, x)

for propagate in ("compressed", "original"):
    cfg = PipelineConfig(propagate=propagate)
    out = stack_forward([r.unrotated_weights() for r in compress_stack(layers, x, cfg)], x)
    print(f"OBR, propagate={propagate:10s}: {np.linalg.norm(out - reference) / np.linalg.norm(reference):.4f}")

naive = compress_stack(layers, x, PipelineConfig(), compressor=compress_baseline)
out = stack_forward([r.unrotated_weights() for r in naive], x)
print(f"no compensation:                {np.linalg.norm(out - reference) / np.linalg.norm(reference):.4f}")

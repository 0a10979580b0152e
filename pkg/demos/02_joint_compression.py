"""
Joint 50% sparsity + 4-bit weights
==================================

Compress a 64x64 layer calibrated on correlated activations and compare
against pruning and quantizing without compensation. Then sweep the
partition ratio alpha.
"""

from dataclasses import replace

import numpy as np

from obr import (
    MaskConfig,
    PipelineConfig,
    QuantizerSpec,
    RotationSpec,
    Unstructured,
    compare_baselines,
    compress_baseline,
    compress_matrix,
    gen_calibration,
)

rng = np.random.default_rng(0)
w = rng.standard_normal((64, 64))
x = gen_calibration(64, 512, correlation=0.8, seed=1)

config = PipelineConfig(
    rotation=RotationSpec("hadamard", seed=0),
    mask=MaskConfig("wanda", Unstructured(0.5)),
    quantizer=QuantizerSpec(bits=4, kind="rtn"),
    alpha=0.5,
)

obr = compress_matrix(w, x, config)
naive = compress_baseline(w, x, config)
print(f"relative output error, no compensation: {naive.report.rel_recon_error:.4f}")
print(f"relative output error, OBR:             {obr.report.rel_recon_error:.4f}")
print(f"achieved sparsity {obr.report.achieved_sparsity:.3f}, pattern valid {obr.report.pattern_valid}")

# Error ratios of OBR with RTN and with GPTQ against the uncompensated baseline.
report = compare_baselines(w, x, config)
for name, ratio in report.baseline_deltas.items():
    print(f"  {name:16s} {ratio:.3f}")

# Partition ratio: the share of retained weights whose rounding error is
# pushed onto the rest.
for alpha in (0.0, 0.2, 0.5, 0.75):
    err = compress_matrix(w, x, replace(config, alpha=alpha)).report.rel_recon_error
    print(f"alpha={alpha:.2f}: {err:.4f}")

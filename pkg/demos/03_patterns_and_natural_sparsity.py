"""
Semi-structured patterns and zeros that appear on their own
===========================================================
"""

import numpy as np

from obr import (
    NM,
    MaskConfig,
    PipelineConfig,
    QuantizerSpec,
    compress_matrix,
    gen_calibration,
    natural_sparsity,
    rtn_quantize,
    sparsity_audit,
)

rng = np.random.default_rng(3)

# 4-bit RTN of Gaussian weights already rounds a sizeable share to zero.
w = rng.standard_normal((256, 256))
print(f"natural zero fraction at 4 bits: {natural_sparsity(rtn_quantize(w, QuantizerSpec(4))):.3f}")

# 2:4 and 4:8 masks with each pruning score, quantized with GPTQ.
w = rng.standard_normal((64, 128))
x = gen_calibration(128, 512, 0.5, seed=4)
for pattern in (NM(2, 4), NM(4, 8)):
    for metric in ("magnitude", "wanda", "sparsegpt"):
        cfg = PipelineConfig(mask=MaskConfig(metric, pattern), quantizer=QuantizerSpec(4, "gptq"))
        res = compress_matrix(w, x, cfg)
        achieved, valid = sparsity_audit(res.weights, pattern)
        print(f"{pattern} {metric:9s} sparsity={achieved:.3f} valid={valid} "
              f"error={res.report.rel_recon_error:.4f}")

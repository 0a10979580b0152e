"""Joint pruning and low-bit quantization of dense weight matrices.

Pruning and rounding errors are moved onto the surviving weights of each row
with a closed-form, Hessian-weighted least-squares correction.
"""

from .calibration import ActivationStats, Hessian, activation_stats, build_hessian, gen_calibration
from .core import (
    RowCompensation,
    RowPartition,
    prune_compensation,
    quant_compensation,
    solve_compensation,
)
from .errors import FormatError, NumericalError, ObrError, ShapeError
from .evaluation import (
    EvalReport,
    compare_baselines,
    natural_sparsity,
    reconstruction_error,
    sparsity_audit,
)
from .masking import NM, PruneMask, Unstructured, build_mask, parse_pattern, prune_scores
from .pipeline import (
    CompressionResult,
    MaskConfig,
    PipelineConfig,
    compress_baseline,
    compress_matrix,
    compress_prune_only,
    compress_quant_only,
    compress_stack,
)
from .quantizer import QuantizedMatrix, QuantizerSpec, gptq_quantize, quant_error, rtn_quantize
from .rotation import RotationSpec, build_rotation, rotate_pair
from .tensor_store import TensorContainer, read_container, write_container

__version__ = "0.1.0"

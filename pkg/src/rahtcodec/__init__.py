"""Lossy point cloud attribute codec.

Hierarchical weighted Haar transform over Morton-ordered voxels with
closed-loop cross-scale prediction, residual quantization, and adaptive
run-length entropy coding.  See the README for the model and the
bitstream document for the wire format.
"""

from .codec import (DEFAULT_BLOCK_BUDGET, EncoderConfig, LOSSLESS_STEP,
                    RateReport, decode, encode, encode_vanilla,
                    encode_with_report, parse_header)
from .entropy import (DEFAULT_PROXY, QuantConfig, RateProxyParams,
                      dequantize, estimate_bits, quantize)
from .errors import BitstreamError, CodecError, PlyError, WeightFileError
from .generate import synth_cloud
from .haar import CoefficientSet, forward_scale, inverse_scale
from .metrics import RDPoint, bd_rate, evaluate_pair, psnr
from .pointcloud import (VoxelizedPointCloud, load_ply, make_cloud,
                         rgb_to_yuv, write_ply, yuv_to_rgb)
from .predict import PredictionConfig, PredictionRefiner, idw_predict
from .pyramid import Pyramid, ScaleLevel, build_pyramid

__version__ = "0.1.0"

__all__ = [
    "BitstreamError", "CodecError", "CoefficientSet", "DEFAULT_BLOCK_BUDGET",
    "DEFAULT_PROXY", "EncoderConfig", "LOSSLESS_STEP", "PlyError",
    "PredictionConfig", "PredictionRefiner", "Pyramid", "QuantConfig",
    "RDPoint", "RateProxyParams", "RateReport", "ScaleLevel",
    "VoxelizedPointCloud", "WeightFileError", "bd_rate", "build_pyramid",
    "decode", "dequantize", "encode", "encode_vanilla", "encode_with_report",
    "estimate_bits", "evaluate_pair", "forward_scale", "idw_predict",
    "inverse_scale", "load_ply", "make_cloud", "parse_header", "psnr",
    "quantize", "rgb_to_yuv", "synth_cloud", "write_ply", "yuv_to_rgb",
]

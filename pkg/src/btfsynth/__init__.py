"""Neural BTF compression with on-the-fly by-example synthesis.

A measured or synthetic BTF (6D reflectance: 2D surface position, two
directions) is compressed into three learned 2D feature planes plus a
small decoder network. At query time the spatial plane is extended to an
arbitrarily large virtual texture by histogram-preserving blending of
hashed exemplar patches (or hex tiling, or precomputed quilting), so any
(u*, wi, wo) sample is answered on demand without storing a large texture.
"""

from .btf_data import (
    BtfDataset,
    SyntheticBtfSpec,
    direction_grid,
    generate_synthetic_btf,
    load_btf,
    sample_batch,
    save_btf,
    texel_center_uv,
)
from .errors import (
    ArgumentError,
    BtfError,
    ConfigError,
    CorruptionError,
    DegeneratePairError,
    FormatError,
    NumericError,
    OutOfHemisphereError,
    VersionError,
)
from .evaluator import BtfEvaluator, BtfQuery, reconstruct_batch
from .halfdiff import (
    DirectionPair,
    HalfDiffCoords,
    cosine_sample_hemisphere,
    from_half_diff,
    halfdiff_to_plane_uv,
    to_half_diff,
)
from .neural_core import (
    AdamWState,
    CheckpointBundle,
    FeaturePlane,
    MlpParams,
    TriplePlaneModel,
    WrapMode,
    adamw_step,
    init_model,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    plane_fetch,
    save_checkpoint,
)
from .render import (
    ImageBuffer,
    RenderSpec,
    bench,
    bench_scaling,
    compute_dssim,
    compute_rmse,
    read_pfm,
    render_plane,
    render_reference,
    write_pfm,
    write_png,
)
from .synthesis import (
    GaussianizedExemplar,
    SynthesisMode,
    SynthesisParams,
    build_gaussianization,
    gauss_forward,
    gauss_inverse,
    hex_grid_lookup,
    make_tileable,
    min_error_seam,
    quilt_synthesize,
    storage_estimate,
    synthesize_features,
    triangle_grid_lookup,
)
from .trainer import TrainConfig, TrainReport, evaluate_reconstruction, loss_and_grads, train

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "AdamWState",
    "BtfDataset",
    "BtfError",
    "BtfEvaluator",
    "BtfQuery",
    "CheckpointBundle",
    "ConfigError",
    "CorruptionError",
    "DegeneratePairError",
    "DirectionPair",
    "FeaturePlane",
    "FormatError",
    "GaussianizedExemplar",
    "HalfDiffCoords",
    "ImageBuffer",
    "MlpParams",
    "NumericError",
    "OutOfHemisphereError",
    "RenderSpec",
    "SynthesisMode",
    "SynthesisParams",
    "SyntheticBtfSpec",
    "TrainConfig",
    "TrainReport",
    "TriplePlaneModel",
    "VersionError",
    "WrapMode",
    "adamw_step",
    "bench",
    "bench_scaling",
    "build_gaussianization",
    "compute_dssim",
    "compute_rmse",
    "cosine_sample_hemisphere",
    "direction_grid",
    "evaluate_reconstruction",
    "from_half_diff",
    "gauss_forward",
    "gauss_inverse",
    "generate_synthetic_btf",
    "halfdiff_to_plane_uv",
    "hex_grid_lookup",
    "init_model",
    "load_btf",
    "load_checkpoint",
    "loss_and_grads",
    "make_tileable",
    "min_error_seam",
    "mlp_backward",
    "mlp_forward",
    "plane_fetch",
    "quilt_synthesize",
    "read_pfm",
    "reconstruct_batch",
    "render_plane",
    "render_reference",
    "sample_batch",
    "save_btf",
    "save_checkpoint",
    "storage_estimate",
    "synthesize_features",
    "texel_center_uv",
    "to_half_diff",
    "train",
    "triangle_grid_lookup",
    "write_pfm",
    "write_png",
]

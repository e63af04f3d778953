from .cnn3d import Cnn3dConfig, VolumeCnn3d
from .rvn import (
    GlimpseAgent,
    RvnConfig,
    Trajectory,
    extract_glimpse,
    extract_glimpse_batch,
)
from .transformer import (
    FrameBackbone,
    FrameSequenceTransformer,
    TransformerConfig,
    attention,
    sinusoidal_encoding,
)

__all__ = [
    "Cnn3dConfig",
    "VolumeCnn3d",
    "RvnConfig",
    "GlimpseAgent",
    "Trajectory",
    "extract_glimpse",
    "extract_glimpse_batch",
    "TransformerConfig",
    "FrameBackbone",
    "FrameSequenceTransformer",
    "attention",
    "sinusoidal_encoding",
]

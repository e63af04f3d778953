"""Volumetric-scan classification toolkit for early detection of
conversion to AD dementia from longitudinal cohorts.

Pipeline: cohort manifests (volume_io) are labeled by closest-visit
matching (labeling), split person-disjoint, rebalanced and batched
(dataset), and fed to one of three classifiers (models): a plain 3D
CNN, a recurrent glimpse agent trained with a score-function policy
gradient, and a frame-sequence attention transformer.  A synthetic
planted-lesion cohort (synth) provides a desk-scale ground truth.
"""

from .dataset import (AugmentOp, LabeledExample, apply_augment,
                      balanced_batch_sampler, ensure_person_disjoint,
                      person_disjoint_split, rebalance)
from .errors import (ConfigError, ContaminationError, ImbalanceError,
                     ManifestError, PreclinError, VolumeFormatError)
from .estimators import (Cnn3dVolumeClassifier, FrameTransformerClassifier,
                         GlimpseAgentClassifier)
from .labeling import (SCHEME_A, SCHEME_B, LabelDecision, assign_label,
                       label_sessions, lead_time_days, match_closest_visit)
from .metrics import ConfusionMatrix, MetricReport, confusion
from .models import (Cnn3dConfig, FrameSequenceTransformer, GlimpseAgent,
                     RvnConfig, Trajectory, TransformerConfig, VolumeCnn3d)
from .optim import OptimizerSpec, default_optimizer_spec, make_optimizer
from .preprocess import preprocess_volume, resize_slice, select_frames
from .synth import LesionSpec, SynthSpec, generate_cohort, generate_volume, roi_oracle
from .training import TrainConfig, train_pipeline
from .volume_io import (ClinicalVisit, ScanSession, SubjectRecord, VoxelVolume,
                        load_manifest, read_volume, write_manifest, write_volume)

__version__ = "0.1.0"

__all__ = [
    "AugmentOp", "LabeledExample", "apply_augment", "balanced_batch_sampler",
    "ensure_person_disjoint", "person_disjoint_split", "rebalance",
    "ConfigError", "ContaminationError", "ImbalanceError", "ManifestError",
    "PreclinError", "VolumeFormatError",
    "Cnn3dVolumeClassifier", "FrameTransformerClassifier",
    "GlimpseAgentClassifier",
    "SCHEME_A", "SCHEME_B", "LabelDecision", "assign_label", "label_sessions",
    "lead_time_days", "match_closest_visit",
    "ConfusionMatrix", "MetricReport", "confusion",
    "Cnn3dConfig", "FrameSequenceTransformer", "GlimpseAgent", "RvnConfig",
    "Trajectory", "TransformerConfig", "VolumeCnn3d",
    "OptimizerSpec", "default_optimizer_spec", "make_optimizer",
    "preprocess_volume", "resize_slice", "select_frames",
    "LesionSpec", "SynthSpec", "generate_cohort", "generate_volume",
    "roi_oracle",
    "TrainConfig", "train_pipeline",
    "ClinicalVisit", "ScanSession", "SubjectRecord", "VoxelVolume",
    "load_manifest", "read_volume", "write_manifest", "write_volume",
    "__version__",
]

"""Storage-bounded 6-DOF pose regression from global image descriptors.

Poses are written as IEEE-754 bit strings, the bit matrix is compressed by
column subset selection, and a ridge regressor maps descriptors to the
selected bits.  Prediction lifts the regressed bits back to a full label,
thresholds it and decodes the floats.
"""

from .pipeline import ModelBundle, predict, predict_batch, storage_bytes, train
from .types import Dataset, PoseVector, TrainConfig, canonicalize_pose, rotation_error_deg

__all__ = [
    "Dataset",
    "ModelBundle",
    "PoseVector",
    "TrainConfig",
    "canonicalize_pose",
    "predict",
    "predict_batch",
    "rotation_error_deg",
    "storage_bytes",
    "train",
]

__version__ = "0.1.0"

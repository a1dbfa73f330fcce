"""Detection, input transforms and runtime cost ceilings."""

from .detector import DefenseVerdict, Detector, balanced_accuracy, classify_trace, train_detector
from .features import TraceFeatures, featurize_trace
from .guard import GuardConfig, GuardedResult, guarded_infer
from .transforms import MeanSmooth, Quantize, TextNormalize, make_transform, transform_input

__all__ = [
    "DefenseVerdict", "Detector", "GuardConfig", "GuardedResult", "MeanSmooth", "Quantize",
    "TextNormalize", "TraceFeatures", "balanced_accuracy", "classify_trace", "featurize_trace",
    "guarded_infer", "make_transform", "train_detector", "transform_input",
]

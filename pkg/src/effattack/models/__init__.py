from .core import DynModel, InferenceResult, InferenceTrace, Thresholds, build_model
from .detection import detect
from .early_exit import early_exit_infer
from .gating import gated_infer
from .generator import generate
from .spec import ModelSpec, default_spec, reference_d1_spec
from .train import train_model
from .vocab import EOS_ID, PAD_ID, Vocab

__all__ = [
    "DynModel", "InferenceResult", "InferenceTrace", "ModelSpec", "Thresholds", "Vocab",
    "EOS_ID", "PAD_ID", "build_model", "default_spec", "detect", "early_exit_infer",
    "gated_infer", "generate", "reference_d1_spec", "train_model",
]

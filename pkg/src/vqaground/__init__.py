"""VQA-grounding pipeline orchestrator and evaluation toolkit."""

from .backends import BackendEndpoint, Detection, ImageRef, SceneOracle
from .datasets import Dataset, GroundingTruth, Sample
from .geometry import BBox, BinaryMask, Polygon
from .metrics import EvalResult, GroundingScore, MatchCriterion
from .pipeline import PipelineConfig, PredictionRecord

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BackendEndpoint",
    "BinaryMask",
    "Dataset",
    "Detection",
    "EvalResult",
    "GroundingScore",
    "GroundingTruth",
    "ImageRef",
    "MatchCriterion",
    "PipelineConfig",
    "Polygon",
    "PredictionRecord",
    "Sample",
    "SceneOracle",
    "__version__",
]

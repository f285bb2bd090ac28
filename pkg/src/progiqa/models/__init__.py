from .backbone import BackboneSpec, StageBackbone, extract_stages
from .extractor import MultiScaleExtractor, MultiScaleFeatures, ProjectAndPool, fuse
from .heads import HeadConfig, QualityLevelHead, ScoreRegressionHead
from .assembly import (
    ModelConfig,
    QualityModel,
    VARIANTS,
    build_model,
    count_parameters,
    equalize_variant_config,
)

__all__ = [
    "BackboneSpec",
    "StageBackbone",
    "extract_stages",
    "MultiScaleExtractor",
    "MultiScaleFeatures",
    "ProjectAndPool",
    "fuse",
    "HeadConfig",
    "QualityLevelHead",
    "ScoreRegressionHead",
    "ModelConfig",
    "QualityModel",
    "VARIANTS",
    "build_model",
    "count_parameters",
    "equalize_variant_config",
]

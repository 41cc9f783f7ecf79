"""Application layer: use cases."""

from src.application.experiment_use_case import ExperimentUseCase, parse_stream_configs
from src.application.pipeline_use_case import CommandResult, PipelineUseCase
from src.application.variant_registry import VariantRegistry, create_variant_registry

__all__ = [
    "CommandResult",
    "ExperimentUseCase",
    "PipelineUseCase",
    "VariantRegistry",
    "create_variant_registry",
    "parse_stream_configs",
]

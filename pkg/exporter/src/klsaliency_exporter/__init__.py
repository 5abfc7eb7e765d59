from .export import (
    ExportConfig,
    ExportedBundle,
    ExporterError,
    LayerNotFound,
    UnsupportedNetwork,
    build_model,
    default_layer,
    export,
    preprocess,
)

__version__ = "0.1.0"

__all__ = [
    "ExportConfig",
    "ExportedBundle",
    "ExporterError",
    "LayerNotFound",
    "UnsupportedNetwork",
    "build_model",
    "default_layer",
    "export",
    "preprocess",
]

"""Offline embedding exporter for DOM-tree classification datasets."""

__version__ = "0.1.0"

from .exporter import (
    DEFAULT_MODEL,
    ExportError,
    ExportJob,
    ModelLoadError,
    TextEncoder,
    collect_keys,
    export,
    normalize_key,
)

__all__ = [
    "DEFAULT_MODEL",
    "ExportError",
    "ExportJob",
    "ModelLoadError",
    "TextEncoder",
    "collect_keys",
    "export",
    "normalize_key",
]

"""Bundle exporter for torch models: flatten prunable weights into FLOP
groups, sample per-example loss gradients and write solver bundles."""

from .export import ExportSpec, UnsupportedLayerError, export_bundle, load_weights_into

__all__ = ["ExportSpec", "UnsupportedLayerError", "export_bundle",
           "load_weights_into"]

__version__ = "0.1.0"

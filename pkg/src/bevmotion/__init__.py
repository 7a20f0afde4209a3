"""Agent-centric raster motion prediction: rasterization, mixture NLL, training and metrics."""

__version__ = "0.1.0"

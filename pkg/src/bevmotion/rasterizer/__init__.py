from .batch import cache_scene, rasterize_dataset
from .cache import cache_filename, read_cache, write_cache
from .core import Raster, local_future, rasterize
from .png import compose_rgb, render_png

__all__ = [
    "Raster",
    "rasterize",
    "local_future",
    "write_cache",
    "read_cache",
    "cache_filename",
    "cache_scene",
    "rasterize_dataset",
    "render_png",
    "compose_rgb",
]

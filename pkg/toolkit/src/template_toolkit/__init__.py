"""Template generation and benchmarking companions to the ``agcr`` codec.

The toolkit talks to the codec exclusively through its command-line interface
and through mask/raster files on disk; it never imports the codec package.
"""

from .otsu import make_otsu_template, multi_otsu_thresholds
from .bench import bench_report

__all__ = ["make_otsu_template", "multi_otsu_thresholds", "bench_report"]

__version__ = "1.0.0"

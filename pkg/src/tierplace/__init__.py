"""Cost-driven SSD/HDD placement of temporary files in data-processing pipelines."""

__version__ = "0.1.0"

"""Dual-scale transformer place-recognition descriptors with block-clustering partitions."""

__version__ = "0.1.0"

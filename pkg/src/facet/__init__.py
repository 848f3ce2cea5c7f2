"""Dataset preparation and evaluation tooling for window instance segmentation."""

__version__ = "0.1.0"

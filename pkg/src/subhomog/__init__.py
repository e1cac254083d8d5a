"""Subsampled numerical homogenization for elliptic problems with rough coefficients."""

__version__ = "0.1.0"

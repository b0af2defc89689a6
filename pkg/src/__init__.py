"""Dual-control workbench - belief-space planning for systems with unknown parameters."""

__version__ = "1.0.0"

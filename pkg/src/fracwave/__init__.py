"""Coupled wave equations with tempered fractional boundary damping."""

from .params import FracParams, SystemParams

__all__ = ["FracParams", "SystemParams"]

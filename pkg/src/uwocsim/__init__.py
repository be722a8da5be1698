"""Vertical underwater optical link simulation and WGG fading analysis."""

__version__ = "0.1.0"

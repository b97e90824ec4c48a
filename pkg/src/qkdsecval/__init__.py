"""Security analysis toolkit for subcarrier-wave QKD systems."""

__version__ = "0.1.0"

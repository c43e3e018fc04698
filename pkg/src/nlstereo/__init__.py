"""Stereo matching with domain-normalized features and non-local filtering."""

__version__ = "0.1.0"

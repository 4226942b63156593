"""Frozen-encoder embedding exporter for the astsearch store format."""

__version__ = "0.1.0"

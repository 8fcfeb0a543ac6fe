"""Downlink mmWave positioning lab: model-based precoding, ML estimation,
Cramér-Rao bounds and end-to-end learned beamformers."""

__version__ = "0.1.0"

"""Lossy compression of multimodal signals: data, architectures, readouts, sweeps."""

__version__ = "0.1.0"

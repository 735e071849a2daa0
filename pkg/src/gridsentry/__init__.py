"""Fault vs. cyber-attack classification of merging-unit waveforms with a streaming decision layer."""

__version__ = "0.1.0"

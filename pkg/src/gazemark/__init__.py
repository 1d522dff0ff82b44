"""Gaze analytics: raw samples to events, main-sequence fits, AOI and event features, classifier evaluation."""

__version__ = "0.1.0"

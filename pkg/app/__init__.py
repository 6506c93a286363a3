# TensegrityTracker - pose tracking for N-bar tensegrity robots from RGB-D and cable sensors

__version__ = "0.1.0"

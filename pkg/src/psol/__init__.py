"""PSOL: class-agnostic pseudo-box generation, box regression on noisy
labels, and weakly supervised localization metrics."""

__version__ = "0.1.0"

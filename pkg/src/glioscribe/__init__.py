"""Glioma MRI feature extraction, findings generation, evaluation, and review tooling."""

__version__ = "0.1.0"

"""Modular multi-dimension debiasing of masked language models."""

__version__ = "0.1.0"

"""Tests for modular-debias package."""

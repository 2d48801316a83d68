"""Sublinear expectations, G-heat equation solver and CLT/LLN harness."""

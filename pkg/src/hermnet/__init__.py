"""Hermite activations, SaaS pseudo-labeling and loss-landscape diagnostics."""

"""Numerical core: spectral operators, sphere geometry, dynamics, diagnostics and initial data."""

"""Thin-plate spline smoothing of scattered data with the Morley element."""

"""Bundled track fixtures."""

"""Schönberg-measure kernel learning toolkit."""

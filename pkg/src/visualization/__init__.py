"""Diagnostic figures."""

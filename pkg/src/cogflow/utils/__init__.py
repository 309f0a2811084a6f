"""Utility helpers for cogflow."""

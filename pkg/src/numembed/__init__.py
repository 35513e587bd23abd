"""Measure how faithfully text-embedding models encode scalar numbers."""

__version__ = "0.1.0"

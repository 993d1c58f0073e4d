"""Seedable three-party coalition game simulator for IRS-assisted PLS downlinks."""

__version__ = "0.1.0"

"""Cycle-aware battery response to pay-for-performance regulation signals."""
__version__ = "0.1.0"

"""BBGKY-hierarchy-informed quantum error mitigation."""

__version__ = "0.1.0"

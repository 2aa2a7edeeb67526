"""Microscopic traffic simulation and detector-based scenario calibration."""

__version__ = "0.1.0"

"""Low-EF detection from ECG diagnostic-probability vectors."""

__version__ = "0.1.0"

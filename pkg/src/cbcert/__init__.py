"""Control barrier certificates and safe polynomial controllers via SOS programming."""

__version__ = "0.1.0"

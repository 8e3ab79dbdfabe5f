"""Error exponents and universal decoding for erasure decoding over unknown DMCs."""

__version__ = "0.1.0"

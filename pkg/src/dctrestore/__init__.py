"""DCT-domain JPEG restoration toolkit."""

__version__ = "0.1.0"

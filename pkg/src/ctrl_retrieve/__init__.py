"""Dense passage retrieval with classifier-predicted control tokens."""

__version__ = "0.1.0"

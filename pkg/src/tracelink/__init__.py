"""Trace-link recommendation with cosine and learned document distances."""

__version__ = "0.1.0"

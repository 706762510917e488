"""Sequence tagging on top of torch, shaped after a popular NLP library."""

__version__ = "0.14.0"

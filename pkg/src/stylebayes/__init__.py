"""Authorship verification with style embeddings and Bayes-factor scoring."""

__version__ = "0.1.0"

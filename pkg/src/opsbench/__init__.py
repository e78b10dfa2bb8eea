"""Reproducible microservice-incident benchmark for operations agents."""

__version__ = "0.1.0"

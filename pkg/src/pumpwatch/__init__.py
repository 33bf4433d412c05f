"""Streaming pump-and-dump target ranking from order-book and trade anomalies."""

__version__ = "0.1.0"

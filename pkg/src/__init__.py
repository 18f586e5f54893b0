"""Span-based differentially private DBSCAN package"""
__version__ = "0.1.0"

"""Deterministic simulator of hybrid partial/global ordering Multi-BFT consensus with escrow."""

__version__ = "0.1.0"

"""Photon statistics of one and two three-level emitters."""

__version__ = "0.1.0"

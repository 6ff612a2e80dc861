"""Logically-centralized security services for SDN control planes.

Entropy gathering, a forward-secure generator, iDVV one-time values, and
symmetric-only device registration and controller-device association.
"""
__version__ = "0.1.0"

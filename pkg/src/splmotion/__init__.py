"""Structured prediction over kinematic trees for 3D human-motion modelling."""

__version__ = "0.1.0"

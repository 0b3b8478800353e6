"""
Distance-Squared Curve Toolkit

Immersion and normal-crossings analysis of distance-squared mappings
composed with plane curves.
"""

__version__ = "0.1.0"

"""
FMSE lab: discrete fractional magnetic Schrödinger operators, gauges, DN maps and walks.
"""

__version__ = "1.0.0"

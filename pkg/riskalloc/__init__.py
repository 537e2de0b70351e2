"""
Capital allocation by multivariate risk indicators.
"""

__version__ = "1.0.0"

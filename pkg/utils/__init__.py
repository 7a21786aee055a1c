"""
Utilities module for critmet.

Numerical helpers shared by the sensing modules.
"""

__all__ = ['numerics']

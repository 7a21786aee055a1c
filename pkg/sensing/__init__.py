"""
Sensing package for critmet.

Dicke-model thermodynamics, qubit-probe dephasing, Fisher information and
the optimization layer built on top of them.
"""

__all__ = ['dicke_thermo', 'probe', 'fisher', 'optimize', 'errors']

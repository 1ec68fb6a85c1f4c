"""
GHZ-Share: three-party quantum secret sharing with pseudo-GHZ states.

This package simulates the correlation physics, post-selection, sifting
protocol and noise of an energy-time pseudo-GHZ experiment, and analyzes
the resulting keys, fringes and Bell parameters.
"""

__version__ = "0.1.0"
__author__ = "Vikrant"
__description__ = "Three-party quantum secret sharing simulator with pseudo-GHZ states"

# Export main modules
from . import correlations
from . import source
from . import devices
from . import protocol
from . import analysis

__all__ = ['correlations', 'source', 'devices', 'protocol', 'analysis']

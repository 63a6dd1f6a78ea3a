"""
Trace Oracle Package

Learns a dominator-tree model of essential states from a few passing
execution traces and validates new traces against it.
"""

__version__ = "0.1.0"
__author__ = "Trace Oracle Team"

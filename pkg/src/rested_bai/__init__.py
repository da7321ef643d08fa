"""
Best-arm identification in rested bandits with decaying losses.
"""
__version__ = "0.1.0"

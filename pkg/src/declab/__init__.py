"""declab: a numerical laboratory for two-state decoherence."""

__version__ = "0.1.0"

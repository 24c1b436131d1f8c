"""Multi-source POI conflation: procurement, standardization, matching and unification."""

__version__ = "0.1.0"

"""carpre: reverse engineering of carpentered objects into fabricable parts."""

__version__ = "0.1.0"

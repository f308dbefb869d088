"""Service migration and edge resource allocation for vehicular MEC grids."""

__version__ = "0.1.0"

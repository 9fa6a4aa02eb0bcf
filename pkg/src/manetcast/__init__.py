"""Minimum-hop vs minimum-edge multicast tree benchmarks over MANET mobility traces."""

__version__ = "0.1.0"

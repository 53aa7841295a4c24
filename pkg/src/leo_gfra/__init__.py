"""MIMO-OTFS grant-free random access for LEO satellite uplink: simulation and MRF-GM-AMP receiver."""

__version__ = "0.1.0"

"""TESLA receipt safety and hardened time synchronization for GNSS-independent clocks."""

__version__ = "0.1.0"

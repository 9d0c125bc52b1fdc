"""disorder-lab: simulation lab for disordered pinning and directed polymer models."""

__version__ = "0.1.0"

"""aeromanip: simulation and control toolkit for a quadcopter-based aerial manipulator."""

__version__ = "0.1.0"

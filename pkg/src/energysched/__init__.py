"""Energy-aware production scheduling with mixed-integer model predictive control."""

__version__ = "0.1.0"

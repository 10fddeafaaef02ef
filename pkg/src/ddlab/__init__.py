"""Double-descent laboratory: actor-critic capacity sweeps on FrozenLake with entropy tracking."""

__version__ = "0.1.0"

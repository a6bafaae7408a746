"""Mining noisy-labeled method invariants from test traces and ranking them with a graph model."""

__version__ = "0.1.0"

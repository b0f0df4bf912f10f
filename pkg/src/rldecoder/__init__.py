"""Reinforcement-learning decoders for the surface code with faulty syndromes."""

__version__ = "0.1.0"

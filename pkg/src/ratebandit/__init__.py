"""Structured-bandit rate adaptation: KL-UCB index policies, channel models and a simulator."""

__version__ = "0.1.0"

"""Reinforcement-learning gust rejection on a surrogate camber-morphing wing."""

__version__ = "0.1.0"

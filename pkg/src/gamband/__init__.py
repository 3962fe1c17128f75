"""Linear bandits under gap-adjusted misspecification."""

__version__ = "0.1.0"

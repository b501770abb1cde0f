"""Version of the pyprefsim package."""

__version__ = "0.1.0"

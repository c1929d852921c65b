"""Maximum caliber over finite kernel families."""

__version__ = "0.1.0"

"""Indirect economic impact of security incidents on governance tokens."""

__version__ = "0.1.0"

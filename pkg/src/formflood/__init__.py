"""Offline simulator of form-based email/SMS flooding and its defenses."""

__version__ = "0.1.0"

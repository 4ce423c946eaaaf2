"""Federated native-ad CTR prediction over multi-platform user behaviors."""

__version__ = "0.1.0"

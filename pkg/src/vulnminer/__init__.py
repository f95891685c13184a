"""PHP vulnerability detection and localization toolkit."""

__version__ = "0.1.0"

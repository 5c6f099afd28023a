"""Square functions built from alpha-numbers on point-cloud measures."""

__version__ = "0.1.0"

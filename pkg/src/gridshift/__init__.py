"""Emission accounting for direct vs emission-oriented EV charging on a merit-order grid."""

__version__ = "0.1.0"

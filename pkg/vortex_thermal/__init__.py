"""Simulator for remotely prepared single-photon OAM thermal states."""

__version__ = '1.0.0'

"""Convex-integration stage engine for the relaxed viscous, resistive MHD system on the 3-torus."""

__version__ = "0.1.0"

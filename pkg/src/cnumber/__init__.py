"""Finite-volume numerical verification of c-number substitution bounds
for the zero mode of an interacting Bose gas."""

__version__ = "0.1.0"

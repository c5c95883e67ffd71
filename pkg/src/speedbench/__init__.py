"""Closed-loop evaluation engine for desired-speed-conditioned driving."""

__version__ = "0.1.0"

FPS = 10
DT = 1.0 / FPS

"""Prioritized whole-body control and convex MPC for constrained,
underactuated manipulators, with a closed-loop simulator and CLI."""

__version__ = "0.1.0"

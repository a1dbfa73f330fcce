"""Efficiency-attack testbed for input-adaptive ("dynamic") neural inference.

Toy models with exact FLOP accounting for four dynamic behaviours
(early exit, autoregressive length, variable output count, light/heavy
gating), attacks that inflate their cost, and defenses against them.
"""

__version__ = "0.1.0"

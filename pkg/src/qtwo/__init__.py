"""Simulators for primitive-ontology quantum theories.

Bohmian trajectories, GRW collapse with matter density and flashes,
Bell-type jump processes, and relativistic flashes in 1+1 dimensions,
plus the harness that runs them reproducibly.
"""

__version__ = "0.1.0"

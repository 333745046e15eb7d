"""Probabilistic cyber-physical systems: exact transition semantics,
state-space exploration, and behavioural distances via optimal transport.
"""

from . import (
    casestudy,
    dist,
    explore,
    metric,
    modeldsl,
    physics,
    semantics,
    syntax,
    transport,
    values,
    weakstep,
)

__all__ = [
    "casestudy",
    "dist",
    "explore",
    "metric",
    "modeldsl",
    "physics",
    "semantics",
    "syntax",
    "transport",
    "values",
    "weakstep",
]

__version__ = "0.1.0"

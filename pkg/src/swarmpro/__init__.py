"""Swarm trajectory planning with sequential convex programming and learned warm starts.

Subpackages and modules: :mod:`dynamics` (relative-orbit motion),
:mod:`scenario` (problem instances), :mod:`lp` and :mod:`scp` (the expert
planner), :mod:`metrics`, :mod:`neural` (networks trained to imitate the
planner), :mod:`pipeline` (experiments) and :mod:`cli`.
"""

__version__ = "0.1.0"

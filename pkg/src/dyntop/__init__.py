"""Dynamic topology optimization toolkit.

Transient structural analysis (implicit time stepping plus a reduced-basis
reanalysis path), snapshot compression into a handful of equivalent static
loads, and density-based compliance optimization, wired together behind a
small CLI.
"""

__version__ = "0.1.0"

"""Analysis, simulation and control of accretive quadratic operators."""

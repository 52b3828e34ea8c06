"""Spectral simulation of the chemotaxis conservation-law system and its zero-diffusion limit."""
from .dynamics import KSState, ModelParams, State
from .grid import Grid, make_grid

__version__ = "0.1.0"

__all__ = ["Grid", "KSState", "ModelParams", "State", "make_grid", "__version__"]

"""Monte-Carlo study of opportunistic resource allocation versus
interference alignment in a macrocell with two femtocells."""

from .channel import Cell, SystemParams
from .experiment import run_trial, simulate, sweep, tradeoff_curve

__all__ = ["Cell", "SystemParams", "run_trial", "simulate", "sweep", "tradeoff_curve"]
__version__ = "0.1.0"

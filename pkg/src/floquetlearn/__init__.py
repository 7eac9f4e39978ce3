"""Learning effective Floquet generators of Trotterized quantum simulations."""

__version__ = "0.1.0"

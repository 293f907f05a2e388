"""Dense GMRES / BA-GMRES with inner-iteration preconditioning and
eigenvalue-based residual bounds, in binary64 or double-double precision."""

from . import dd

__version__ = "0.1.0"

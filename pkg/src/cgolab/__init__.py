"""Complex geometrical optics solutions and increasing-stability coefficient
recovery for the cubic Helmholtz equation on transversally anisotropic cylinders."""

__version__ = "0.1.0"

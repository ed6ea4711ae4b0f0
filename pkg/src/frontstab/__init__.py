"""frontstab: pointwise Green-function construction and nonlinear
stability experiments for reaction-diffusion fronts."""

__version__ = "0.1.0"

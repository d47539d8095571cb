"""Node importance estimation on heterogeneous information networks."""

__version__ = "0.1.0"

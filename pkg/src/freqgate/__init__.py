"""Design, simulation and characterisation of frequency-bin linear-optical gates."""

__version__ = "0.1.0"

"""False-data-injection attack lab for DC state estimation on the IEEE 39-bus system."""

__version__ = "0.1.0"

"""sagrape core layer: spin dynamics, objectives and optimizers (no UI code)."""

__version__ = "1.0.0"

"""Rate-equation simulation and parameter extraction for photonic-crystal nanocavity lasers."""

__version__ = "0.1.0"

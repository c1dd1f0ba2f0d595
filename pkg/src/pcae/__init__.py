"""Principal-component autoencoder: variance-ordered nonlinear dimensionality reduction."""

__version__ = "0.1.0"

"""General latent feature model for heterogeneous tabular data."""

__version__ = "0.1.0"

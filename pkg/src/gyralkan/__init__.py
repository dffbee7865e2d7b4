"""Structural-similarity multi-hop features and KAN autoencoder embeddings for GyralNet nodes."""

__version__ = "0.1.0"

"""Tensor engine, networks, motion models, losses and training."""

"""Joint-distribution matching for unpaired domain translation.

Pure-numpy building blocks: a small reverse-mode autodiff engine, MLPs with
Adam, exact and entropic optimal transport, the two-domain autoencoder/GAN
model and its trainer, latent interpolation, and evaluation metrics.
"""
__version__ = "0.1.0"

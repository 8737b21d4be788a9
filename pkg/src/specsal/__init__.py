"""Desk-scale hyperspectral salient-object-detection toolkit.

Subsystems: a numpy-backed gradient tape (tensor), hyperspectral cube and
dataset tooling (cube, masks, scenes, manifest), a spectral attention encoder
with reconstruction head (spectral_attention), a multi-resolution saliency
network with ternary decoding (saliency_net, model), training and gradient
verification (losses, training), classical spectral baselines (baselines),
detection metrics (metrics), and a batch CLI (cli).
"""

__version__ = "0.1.0"

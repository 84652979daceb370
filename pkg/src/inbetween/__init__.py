"""Keyframe motion in-betweening by latent diffusion over a continuous-time
motion autoencoder, with sampling-time manifold guidance."""

__version__ = "0.1.0"

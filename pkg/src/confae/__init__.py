"""confae: confounder-free latent representations for image association analysis."""

__version__ = "0.1.0"

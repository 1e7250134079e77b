"""caso-lab: desk-scale diffusion editing with learned semantic embeddings."""

__version__ = "0.1.0"

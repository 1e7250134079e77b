"""Trainable networks: conditional denoiser, attribute classifier, latent codec."""

from src.models.classifier import ClassifierConfig, ClassifierModel, train_classifier
from src.models.codec import Codec, CodecConfig, train_codec
from src.models.denoiser import DenoiserConfig, DenoiserModel, train_denoiser

__all__ = [
    "ClassifierConfig",
    "ClassifierModel",
    "Codec",
    "CodecConfig",
    "DenoiserConfig",
    "DenoiserModel",
    "train_classifier",
    "train_codec",
    "train_denoiser",
]

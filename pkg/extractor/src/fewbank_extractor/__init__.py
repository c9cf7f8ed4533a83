"""Produce fewbank-format embedding banks from labeled image folders."""

from .encoders import (
    EncoderLoadError,
    HFClipEncoder,
    HFDinoEncoder,
    ToyColorEncoder,
    ToyTextEncoder,
    ToyTextureEncoder,
    make_image_encoder,
    make_text_encoder,
)
from .extract import ExtractJob, run_extract
from .formats import write_bank, write_manifest, write_scores
from .generate import make_generator, stub_generate

__all__ = [
    "EncoderLoadError",
    "ExtractJob",
    "HFClipEncoder",
    "HFDinoEncoder",
    "ToyColorEncoder",
    "ToyTextEncoder",
    "ToyTextureEncoder",
    "make_generator",
    "make_image_encoder",
    "make_text_encoder",
    "run_extract",
    "stub_generate",
    "write_bank",
    "write_manifest",
    "write_scores",
]

__version__ = "0.1.0"

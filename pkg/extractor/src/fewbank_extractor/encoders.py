"""Image and text encoders.

Two families:

* ``toy-clip`` / ``toy-dino``: deterministic, dependency-light encoders for
  offline use. Each reduces the image to fixed pixel statistics (color grid
  plus histograms for the clip-like view, grayscale texture gradients for the
  dino-like view) and pushes them through a frozen random projection seeded by
  the encoder name. Byte-identical inputs give byte-identical embeddings.
* ``clip:<model-id>`` / ``dino:<model-id>``: real pretrained encoders via
  torch + transformers. Loaded lazily; a missing dependency or weights is a
  fatal EncoderLoadError, matching the extraction contract.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image


class EncoderLoadError(RuntimeError):
    """A requested encoder backend cannot be constructed."""


def _seed_from(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("zero feature vector; cannot normalize")
    return x / norms


class _Projection:
    """Frozen Gaussian projection from raw statistics to the embedding space."""

    def __init__(self, name: str, raw_dim: int, dim: int):
        rng = np.random.default_rng(_seed_from(name))
        self.matrix = rng.standard_normal((raw_dim, dim)) / np.sqrt(raw_dim)
        self.dim = dim

    def __call__(self, raw: np.ndarray) -> np.ndarray:
        return _normalize_rows(raw @ self.matrix)


class ToyColorEncoder:
    """Color-centric view: 8x8 RGB grid plus per-channel histograms."""

    dim = 64

    def __init__(self):
        self.name = "toy-clip"
        # 8*8*3 grid + 3*8 histogram bins + bias
        self._project = _Projection(self.name, 8 * 8 * 3 + 24 + 1, self.dim)

    def _stats(self, img: Image.Image) -> np.ndarray:
        rgb = np.asarray(img.convert("RGB").resize((8, 8), Image.BILINEAR),
                         dtype=np.float64) / 255.0
        full = np.asarray(img.convert("RGB").resize((32, 32), Image.BILINEAR),
                          dtype=np.float64)
        hists = [np.histogram(full[..., c], bins=8, range=(0.0, 255.0))[0] / 1024.0
                 for c in range(3)]
        return np.concatenate([rgb.ravel(), *hists, [1.0]])

    def encode_images(self, images) -> np.ndarray:
        return self._project(np.stack([self._stats(img) for img in images]))


class ToyTextureEncoder:
    """Texture-centric view: grayscale grid and gradient magnitudes."""

    dim = 48

    def __init__(self):
        self.name = "toy-dino"
        # 16x16 gray + two gradient maps + bias
        self._project = _Projection(self.name, 256 + 240 + 240 + 1, self.dim)

    def _stats(self, img: Image.Image) -> np.ndarray:
        gray = np.asarray(img.convert("L").resize((16, 16), Image.BILINEAR),
                          dtype=np.float64) / 255.0
        gx = np.abs(np.diff(gray, axis=1))
        gy = np.abs(np.diff(gray, axis=0))
        return np.concatenate([gray.ravel(), gx.ravel(), gy.ravel(), [1.0]])

    def encode_images(self, images) -> np.ndarray:
        return self._project(np.stack([self._stats(img) for img in images]))


class ToyTextEncoder:
    """Hashed character trigrams projected into the toy-clip space.

    Deterministic and unit-norm, but carries no visual grounding; prefer the
    prototype text head when pairing with the toy image encoders.
    """

    def __init__(self, dim: int = ToyColorEncoder.dim, buckets: int = 512):
        self.name = "toy-text"
        self.buckets = buckets
        self._project = _Projection(self.name, buckets + 1, dim)

    def _counts(self, text: str) -> np.ndarray:
        padded = f"  {text.lower()}  "
        counts = np.zeros(self.buckets)
        for i in range(len(padded) - 2):
            counts[_seed_from(padded[i:i + 3]) % self.buckets] += 1.0
        return np.concatenate([counts, [1.0]])

    def encode_texts(self, texts) -> np.ndarray:
        return self._project(np.stack([self._counts(t) for t in texts]))


class HFClipEncoder:
    """Contrastive vision-language encoder from transformers (image + text)."""

    def __init__(self, model_id: str):
        self.name = f"clip:{model_id}"
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderLoadError(f"clip backend needs torch+transformers: {exc}")
        try:
            self._torch = torch
            self._model = CLIPModel.from_pretrained(model_id).eval()
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load clip model {model_id!r}: {exc}")
        self.dim = int(self._model.config.projection_dim)

    def encode_images(self, images) -> np.ndarray:
        inputs = self._processor(images=list(images), return_tensors="pt")
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return _normalize_rows(feats.double().cpu().numpy())

    def encode_texts(self, texts) -> np.ndarray:
        inputs = self._processor(text=list(texts), return_tensors="pt",
                                 padding=True, truncation=True)
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return _normalize_rows(feats.double().cpu().numpy())


class HFDinoEncoder:
    """Self-distilled vision encoder from transformers (CLS pooled)."""

    def __init__(self, model_id: str):
        self.name = f"dino:{model_id}"
        try:
            import torch
            from transformers import AutoImageProcessor, AutoModel
        except ImportError as exc:
            raise EncoderLoadError(f"dino backend needs torch+transformers: {exc}")
        try:
            self._torch = torch
            self._model = AutoModel.from_pretrained(model_id).eval()
            self._processor = AutoImageProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load dino model {model_id!r}: {exc}")
        self.dim = int(self._model.config.hidden_size)

    def encode_images(self, images) -> np.ndarray:
        inputs = self._processor(images=list(images), return_tensors="pt")
        with self._torch.no_grad():
            out = self._model(**inputs).last_hidden_state[:, 0]
        return _normalize_rows(out.double().cpu().numpy())


def make_image_encoder(spec: str):
    if spec == "toy-clip":
        return ToyColorEncoder()
    if spec == "toy-dino":
        return ToyTextureEncoder()
    if spec.startswith("clip:"):
        return HFClipEncoder(spec.split(":", 1)[1])
    if spec.startswith("dino:"):
        return HFDinoEncoder(spec.split(":", 1)[1])
    raise EncoderLoadError(
        f"unknown encoder {spec!r}; expected toy-clip, toy-dino, "
        "clip:<model-id>, or dino:<model-id>"
    )


def make_text_encoder(image_encoder) -> object:
    """Text tower paired with the given clip-side image encoder."""
    if isinstance(image_encoder, HFClipEncoder):
        return image_encoder
    if isinstance(image_encoder, ToyColorEncoder):
        return ToyTextEncoder(dim=image_encoder.dim)
    raise EncoderLoadError(
        f"{image_encoder.name} has no paired text tower; use a clip-side encoder"
    )

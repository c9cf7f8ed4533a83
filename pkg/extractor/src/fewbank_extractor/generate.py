"""Candidate image generation.

The ``stub`` backend draws procedural class-conditioned images: background and
shape are derived from a hash of the class name, per-sample jitter from the
seed, so a given (class list, count, seed) always produces the same pixels.
It stands in for a text-to-image model where none is available; a real
generative backend can be added under its own name and stays fatal-on-missing.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image, ImageDraw

from .encoders import EncoderLoadError

_SHAPES = ("ellipse", "rectangle", "triangle", "cross")


def _class_style(class_name: str) -> tuple[tuple[int, int, int], str]:
    digest = hashlib.sha256(class_name.encode()).digest()
    hue = np.array([digest[0], digest[1], digest[2]], dtype=np.int64)
    color = tuple(int(64 + (h % 160)) for h in hue)
    return color, _SHAPES[digest[3] % len(_SHAPES)]


def stub_generate(class_name: str, count: int, seed: int,
                  size: int = 64) -> list[Image.Image]:
    """Deterministic procedural images for one class."""
    color, shape = _class_style(class_name)
    rng = np.random.default_rng([seed, _class_style(class_name)[0][0],
                                 len(class_name)])
    images = []
    for _ in range(count):
        bg = tuple(int(np.clip(c + rng.integers(-30, 31), 0, 255))
                   for c in color)
        img = Image.new("RGB", (size, size), bg)
        draw = ImageDraw.Draw(img)
        fg = tuple(int(np.clip(255 - c + rng.integers(-40, 41), 0, 255))
                   for c in color)
        cx, cy = (int(rng.integers(size // 4, 3 * size // 4)) for _ in range(2))
        r = int(rng.integers(size // 8, size // 3))
        box = (cx - r, cy - r, cx + r, cy + r)
        if shape == "ellipse":
            draw.ellipse(box, fill=fg)
        elif shape == "rectangle":
            draw.rectangle(box, fill=fg)
        elif shape == "triangle":
            draw.polygon([(cx, cy - r), (cx - r, cy + r), (cx + r, cy + r)],
                         fill=fg)
        else:
            w = max(2, r // 3)
            draw.rectangle((cx - r, cy - w, cx + r, cy + w), fill=fg)
            draw.rectangle((cx - w, cy - r, cx + w, cy + r), fill=fg)
        # speckle noise so candidates are not literal duplicates
        noise = rng.integers(0, size, (8, 2))
        for x, y in noise:
            draw.point((int(x), int(y)), fill=tuple(int(v) for v in
                                                    rng.integers(0, 256, 3)))
        images.append(img)
    return images


def make_generator(spec: str):
    """Returns generate(class_name, count, seed) -> list of images."""
    if spec == "stub":
        return stub_generate
    raise EncoderLoadError(
        f"unknown generator {spec!r}; only the deterministic 'stub' backend "
        "is bundled"
    )

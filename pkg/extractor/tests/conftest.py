import numpy as np
import pytest
from PIL import Image, ImageDraw

CLASS_STYLES = {
    "amber": ((205, 160, 60), "cross"),
    "azure": ((70, 110, 200), "triangle"),
    "jade": ((60, 170, 110), "rectangle"),
    "ruby": ((190, 60, 70), "ellipse"),
}


def _draw_sample(name: str, rng, size: int = 64) -> Image.Image:
    color, shape = CLASS_STYLES[name]
    bg = tuple(int(np.clip(c + rng.integers(-35, 36), 0, 255)) for c in color)
    img = Image.new("RGB", (size, size), bg)
    draw = ImageDraw.Draw(img)
    fg = tuple(int(np.clip(255 - c + rng.integers(-30, 31), 0, 255))
               for c in color)
    cx, cy = (int(rng.integers(20, 44)) for _ in range(2))
    r = int(rng.integers(10, 20))
    if shape == "ellipse":
        draw.ellipse((cx - r, cy - r, cx + r, cy + r), fill=fg)
    elif shape == "rectangle":
        draw.rectangle((cx - r, cy - r, cx + r, cy + r), fill=fg)
    elif shape == "triangle":
        draw.polygon([(cx, cy - r), (cx - r, cy + r), (cx + r, cy + r)], fill=fg)
    else:
        w = max(3, r // 3)
        draw.rectangle((cx - r, cy - w, cx + r, cy + w), fill=fg)
        draw.rectangle((cx - w, cy - r, cx + w, cy + r), fill=fg)
    for _ in range(60):
        xy = (int(rng.integers(0, size)), int(rng.integers(0, size)))
        draw.point(xy, fill=tuple(int(v) for v in rng.integers(0, 256, 3)))
    return img


def build_image_tree(root, per_class: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    for name in sorted(CLASS_STYLES):
        class_dir = root / name
        class_dir.mkdir(parents=True)
        for i in range(per_class):
            _draw_sample(name, rng).save(class_dir / f"{name}_{i:03d}.png")


@pytest.fixture(scope="session")
def image_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("images") / "train"
    build_image_tree(root, per_class=12, seed=0)
    return root


@pytest.fixture(scope="session")
def query_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("images") / "val"
    build_image_tree(root, per_class=8, seed=1)
    return root

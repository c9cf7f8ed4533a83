"""Extraction pipeline: image folder -> aligned banks + text head + manifest.

The image root holds one subfolder per class. Both encoders see exactly the
same decoded image list, so the two banks stay row-aligned by construction;
an undecodable file is skipped (with a warning) before either encoder runs.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .encoders import make_image_encoder, make_text_encoder
from .formats import write_bank, write_manifest, write_scores
from .generate import make_generator

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp", ".tiff"}


@dataclass
class ExtractJob:
    image_root: Path
    out_dir: Path
    class_names: list[str] | None = None
    clip_encoder: str = "toy-clip"
    dino_encoder: str = "toy-dino"
    template: str = "a photo of a {}."
    class_prompts: dict[str, str] = field(default_factory=dict)
    query_root: Path | None = None
    text_head: str = "encoder"  # or "prototypes"
    generate: int = 0
    generator: str = "stub"
    seed: int = 0
    batch_size: int = 32


def _discover_classes(root: Path) -> list[str]:
    names = sorted(p.name for p in root.iterdir() if p.is_dir())
    if len(names) < 2:
        raise ValueError(f"{root} must hold at least 2 class subfolders")
    return names


def _load_class_images(root: Path, class_names: list[str]):
    """Decoded images and labels, in (class, filename) order; bad files skipped."""
    images, labels = [], []
    for label, name in enumerate(class_names):
        class_dir = root / name
        if not class_dir.is_dir():
            raise FileNotFoundError(f"missing class folder {class_dir}")
        files = sorted(p for p in class_dir.iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise ValueError(f"{class_dir} holds no images")
        for path in files:
            try:
                with Image.open(path) as img:
                    images.append(img.convert("RGB").copy())
            except (UnidentifiedImageError, OSError) as exc:
                print(f"warning: skipping undecodable {path}: {exc}",
                      file=sys.stderr)
                continue
            labels.append(label)
    return images, np.asarray(labels, dtype=np.int64)


def _encode_batched(encoder, images, batch_size: int) -> np.ndarray:
    parts = [encoder.encode_images(images[i:i + batch_size])
             for i in range(0, len(images), batch_size)]
    return np.vstack(parts)


def _prompts(job: ExtractJob, class_names: list[str]) -> list[str]:
    return [job.class_prompts.get(name, job.template.format(name))
            for name in class_names]


def run_extract(job: ExtractJob) -> Path:
    """Extract all banks and write the manifest; returns the manifest path."""
    class_names = job.class_names or _discover_classes(job.image_root)
    clip_enc = make_image_encoder(job.clip_encoder)
    dino_enc = make_image_encoder(job.dino_encoder)

    support_images, support_labels = _load_class_images(job.image_root,
                                                        class_names)
    support_clip = _encode_batched(clip_enc, support_images, job.batch_size)
    support_dino = _encode_batched(dino_enc, support_images, job.batch_size)

    if job.query_root is not None:
        query_images, query_labels = _load_class_images(job.query_root,
                                                        class_names)
        query_clip = _encode_batched(clip_enc, query_images, job.batch_size)
        query_dino = _encode_batched(dino_enc, query_images, job.batch_size)
    else:
        query_labels = support_labels
        query_clip, query_dino = support_clip, support_dino

    if job.text_head == "prototypes":
        # normalized class centroids of the clip-view support features
        rows = [support_clip[support_labels == c].mean(axis=0)
                for c in range(len(class_names))]
        head = np.stack(rows)
        head /= np.linalg.norm(head, axis=1, keepdims=True)
    elif job.text_head == "encoder":
        text_enc = make_text_encoder(clip_enc)
        head = text_enc.encode_texts(_prompts(job, class_names))
    else:
        raise ValueError(f"unknown text head mode {job.text_head!r}")

    out = Path(job.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_bank(out / "clip_support.mkeb", support_clip, support_labels)
    write_bank(out / "dino_support.mkeb", support_dino, support_labels)
    write_bank(out / "clip_query.mkeb", query_clip, query_labels)
    write_bank(out / "dino_query.mkeb", query_dino, query_labels)
    write_bank(out / "text_head.mkeb", head)
    banks = {
        "clip_support": "clip_support.mkeb",
        "dino_support": "dino_support.mkeb",
        "clip_query": "clip_query.mkeb",
        "dino_query": "dino_query.mkeb",
        "text_head": "text_head.mkeb",
    }

    if job.generate > 0:
        generator = make_generator(job.generator)
        cand_images, cand_labels = [], []
        for label, name in enumerate(class_names):
            made = generator(name, job.generate, job.seed)
            cand_images.extend(made)
            cand_labels.extend([label] * len(made))
        cand_labels = np.asarray(cand_labels, dtype=np.int64)
        cand_clip = _encode_batched(clip_enc, cand_images, job.batch_size)
        cand_dino = _encode_batched(dino_enc, cand_images, job.batch_size)
        # filtering criterion: similarity between the candidate's clip-view
        # embedding and its class text row
        scores = np.einsum("ij,ij->i", cand_clip, head[cand_labels])
        write_bank(out / "clip_candidates.mkeb", cand_clip, cand_labels)
        write_bank(out / "dino_candidates.mkeb", cand_dino, cand_labels)
        write_scores(out / "candidate_scores.mksc", scores)
        banks.update({
            "clip_candidates": "clip_candidates.mkeb",
            "dino_candidates": "dino_candidates.mkeb",
            "candidate_scores": "candidate_scores.mksc",
        })

    shots = int(np.bincount(support_labels).min())
    manifest_path = out / "manifest.json"
    write_manifest(manifest_path, class_names, shots, job.seed, banks)
    return manifest_path

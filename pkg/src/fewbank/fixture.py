"""Deterministic synthetic two-view datasets written as manifest + banks.

Two generators:

* complementary: 3 classes where view 1 separates classes {0,1} but muddles
  class 2 (its view-1 features either collide with class 1 or scatter), view 2
  separates {1,2} but muddles class 0 the same way, and the text head carries
  a weak noisy signal. Per-sample reweighting has to pick the trustworthy
  view, so the adaptive ensemble beats either single branch here.
* gaussian: n_classes unit-norm cluster centers per view with isotropic noise,
  a benchmark for training the cache keys.

All randomness flows from one PCG64 generator per fixture, so banks are
bit-reproducible for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .banks import EmbeddingBank, Manifest, write_bank, write_manifest
from .expansion import write_scores
from .validation import l2_normalize

# spawn-key appended to the user seed so each generator family draws from its
# own decorrelated stream
_COMPLEMENTARY_STREAM = 8
_GAUSSIAN_STREAM = 14


@dataclass
class FixtureData:
    class_names: list[str]
    shots: int
    seed: int
    support_clip: EmbeddingBank
    support_dino: EmbeddingBank
    query_clip: EmbeddingBank
    query_dino: EmbeddingBank
    text_head: np.ndarray
    cand_clip: EmbeddingBank
    cand_dino: EmbeddingBank
    cand_scores: np.ndarray


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _noisy_dirs(rng, dirs: np.ndarray, noise: float) -> np.ndarray:
    return l2_normalize(dirs + noise * rng.standard_normal(dirs.shape))


def _complementary_view(rng, labels: np.ndarray, dim: int,
                        clean: dict[int, int], muddled: int, faint_axis: int,
                        faint: float, noise: float) -> np.ndarray:
    """Sample one view: clean classes sit on their own axis; the muddled
    class scatters to a per-sample random direction, carrying only a faint
    component on its true axis (or none at all when faint=0)."""
    n = labels.shape[0]
    base = np.zeros((n, dim))
    for c, axis in clean.items():
        base[labels == c, axis] = 1.0
    for row in np.flatnonzero(labels == muddled):
        base[row] = _unit(rng.standard_normal(dim))
        base[row, faint_axis] += faint
    return _noisy_dirs(rng, base, noise)


def make_complementary_fixture(
    seed: int = 0,
    dim: int = 16,
    shots: int = 8,
    queries_per_class: int = 40,
    candidates_per_class: int = 24,
    noise: float = 0.2,
    faint: float = 0.7,
    head_noise: tuple[float, float, float] = (1.5, 0.6, 0.25),
) -> FixtureData:
    rng = np.random.default_rng([seed, _COMPLEMENTARY_STREAM])
    n_classes = 3

    def labels_for(per_class: int) -> np.ndarray:
        return np.repeat(np.arange(n_classes, dtype=np.int64), per_class)

    def draw_views(per_class: int, faint_amount: float):
        labels = labels_for(per_class)
        # view 1: classes 0,1 on axes 0,1; class 2 scatters with a faint
        # component on axis 2
        view1 = _complementary_view(
            rng, labels, dim, clean={0: 0, 1: 1}, muddled=2,
            faint_axis=2, faint=faint_amount, noise=noise,
        )
        # view 2: classes 1,2 on axes 0,1; class 0 is the muddled one
        view2 = _complementary_view(
            rng, labels, dim, clean={1: 0, 2: 1}, muddled=0,
            faint_axis=2, faint=faint_amount, noise=noise,
        )
        return view1, view2, labels

    # the muddled class's support carries no usable signal in its weak view
    # (pure scatter), while queries and candidates keep the faint component
    # the text head is anchored on; that split is what forces the ensemble to
    # pick the trustworthy view per sample
    support_clip, support_dino, support_labels = draw_views(shots, 0.0)
    query_clip, query_dino, query_labels = draw_views(queries_per_class, faint)
    cand_clip, cand_dino, cand_labels = draw_views(candidates_per_class, faint)

    # weakly informative head: class anchors on the view-1 axes, with per-class
    # noise levels (class 2's anchor is the faint axis, so it gets the least)
    anchors = np.zeros((n_classes, dim))
    anchors[0, 0] = anchors[1, 1] = anchors[2, 2] = 1.0
    text_head = np.vstack([
        _noisy_dirs(rng, anchors[c:c + 1], head_noise[c]) for c in range(n_classes)
    ])

    scores = np.einsum("ij,ij->i", cand_clip, text_head[cand_labels])
    return FixtureData(
        class_names=[f"class_{i}" for i in range(n_classes)],
        shots=shots,
        seed=seed,
        support_clip=EmbeddingBank(support_clip, support_labels),
        support_dino=EmbeddingBank(support_dino, support_labels.copy()),
        query_clip=EmbeddingBank(query_clip, query_labels),
        query_dino=EmbeddingBank(query_dino, query_labels.copy()),
        text_head=text_head,
        cand_clip=EmbeddingBank(cand_clip, cand_labels),
        cand_dino=EmbeddingBank(cand_dino, cand_labels.copy()),
        cand_scores=scores,
    )


def make_gaussian_fixture(
    seed: int = 0,
    n_classes: int = 10,
    dim: int = 16,
    shots: int = 16,
    queries_per_class: int = 30,
    candidates_per_class: int = 20,
    noise: float = 0.4,
    head_noise: float = 0.45,
) -> FixtureData:
    rng = np.random.default_rng([seed, _GAUSSIAN_STREAM])
    protos_clip = l2_normalize(rng.standard_normal((n_classes, dim)))
    protos_dino = l2_normalize(rng.standard_normal((n_classes, dim)))

    def draw(per_class: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
        view1 = _noisy_dirs(rng, protos_clip[labels], noise)
        view2 = _noisy_dirs(rng, protos_dino[labels], noise)
        return view1, view2, labels

    support_clip, support_dino, support_labels = draw(shots)
    query_clip, query_dino, query_labels = draw(queries_per_class)
    cand_clip, cand_dino, cand_labels = draw(candidates_per_class)
    text_head = _noisy_dirs(rng, protos_clip, head_noise)
    scores = np.einsum("ij,ij->i", cand_clip, text_head[cand_labels])
    return FixtureData(
        class_names=[f"class_{i}" for i in range(n_classes)],
        shots=shots,
        seed=seed,
        support_clip=EmbeddingBank(support_clip, support_labels),
        support_dino=EmbeddingBank(support_dino, support_labels.copy()),
        query_clip=EmbeddingBank(query_clip, query_labels),
        query_dino=EmbeddingBank(query_dino, query_labels.copy()),
        text_head=text_head,
        cand_clip=EmbeddingBank(cand_clip, cand_labels),
        cand_dino=EmbeddingBank(cand_dino, cand_labels.copy()),
        cand_scores=scores,
    )


def write_fixture(fx: FixtureData, out_dir) -> Path:
    """Write all banks plus the manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_bank(out / "clip_support.mkeb", fx.support_clip)
    write_bank(out / "dino_support.mkeb", fx.support_dino)
    write_bank(out / "clip_query.mkeb", fx.query_clip)
    write_bank(out / "dino_query.mkeb", fx.query_dino)
    write_bank(out / "text_head.mkeb", EmbeddingBank(fx.text_head))
    write_bank(out / "clip_candidates.mkeb", fx.cand_clip)
    write_bank(out / "dino_candidates.mkeb", fx.cand_dino)
    write_scores(out / "candidate_scores.mksc", fx.cand_scores)
    manifest = Manifest(
        class_names=fx.class_names,
        shots=fx.shots,
        seed=fx.seed,
        banks={
            "clip_support": "clip_support.mkeb",
            "dino_support": "dino_support.mkeb",
            "clip_query": "clip_query.mkeb",
            "dino_query": "dino_query.mkeb",
            "text_head": "text_head.mkeb",
            "clip_candidates": "clip_candidates.mkeb",
            "dino_candidates": "dino_candidates.mkeb",
            "candidate_scores": "candidate_scores.mksc",
        },
        root=out,
    )
    path = out / "manifest.json"
    write_manifest(path, manifest)
    return path

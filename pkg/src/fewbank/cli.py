"""Command-line interface: expansion, cache building, training, evaluation,
hyperparameter sweeps, ensemble ablations, and synthetic fixtures.

Exit codes: 0 success, 1 usage error, 2 data error. All file outputs are
byte-deterministic for a fixed manifest and seed (no timestamps anywhere).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import fixture as fixture_mod
from .adapter import CacheModel, ZeroShotHead, fused_logits, load_cache, save_cache
from .banks import (
    EmbeddingBank,
    Manifest,
    check_paired,
    load_manifest,
    one_hot,
    sample_support_indices,
    write_bank,
    write_manifest,
)
from .ensemble import MODES
from .errors import DataError, EngineError, ManifestError
from .expansion import CandidatePool, expand_support, filter_top_k, load_scores, recompute_scores
from .metrics import evaluate
from .train import TrainConfig, train
from .validation import check_labels

BETA_GRID = (0.4, 0.5, 0.6, 0.7, 0.8, 1.0)
KPRIME_GRID = (1, 2, 4, 8, 16)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage by default; this CLI reserves 2 for data
    errors, so remap usage failures to exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: _Parser, manifest_required: bool = True) -> None:
    p.add_argument("--manifest", required=manifest_required,
                   help="dataset manifest (JSON)")
    p.add_argument("--shots", type=int, default=None,
                   help="override per-class support count from the manifest")
    p.add_argument("--synthetic-k", type=int, default=0,
                   help="per-class synthetic rows to merge from the candidate pool")
    p.add_argument("--beta", type=float, default=0.6, help="affinity sharpness")
    p.add_argument("--mode", choices=MODES, default="adaptive_zs_base")
    p.add_argument("--seed", type=int, default=None,
                   help="override the manifest seed")
    p.add_argument("--rescore", action="store_true",
                   help="recompute candidate scores from the text head instead "
                        "of trusting the sidecar file")


def _add_train_flags(p: _Parser, default_epochs: int) -> None:
    p.add_argument("--epochs", type=int, default=default_epochs)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--detach-weights", action="store_true",
                   help="stop gradients at the adaptive ensemble weights")
    p.add_argument("--loss-branch", action="store_true",
                   help="train on the unweighted sum of normalized logits")


def build_parser() -> _Parser:
    parser = _Parser(prog="fewbank", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("expand", help="filter candidates and merge with support")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("build", help="write an untrained cache checkpoint")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="fine-tune the cache keys")
    _add_common(p)
    _add_train_flags(p, default_epochs=20)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate fused logits on the query banks")
    _add_common(p)
    p.add_argument("--checkpoint", default=None,
                   help="MKCP checkpoint; omitted = build the cache fresh")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over beta and/or synthetic-k")
    _add_common(p)
    _add_train_flags(p, default_epochs=0)
    p.add_argument("--beta-grid", action="store_true",
                   help=f"sweep beta over {BETA_GRID}")
    p.add_argument("--kprime-grid", action="store_true",
                   help=f"sweep synthetic-k over {KPRIME_GRID}")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="one evaluation row per ensemble mode")
    _add_common(p)
    _add_train_flags(p, default_epochs=0)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth-fixture", help="write a deterministic synthetic dataset")
    p.add_argument("--kind", choices=("complementary", "gaussian"),
                   default="complementary")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth_fixture)

    return parser


def _load_support(manifest: Manifest, shots: int, seed: int):
    """Sampled, paired support banks, or (None, None) in the zero-shot regime."""
    if shots == 0:
        return None, None
    clip = manifest.load("clip_support")
    dino = manifest.load("dino_support")
    if clip.labels is None or dino.labels is None:
        raise ManifestError("support banks must carry labels")
    check_paired(clip, dino, "support banks")
    check_labels(clip.labels, manifest.n_classes, "support labels")
    idx = sample_support_indices(clip.labels, shots, seed, manifest.n_classes)
    return (
        EmbeddingBank(clip.features[idx], clip.labels[idx]),
        EmbeddingBank(dino.features[idx], dino.labels[idx]),
    )


def _load_pool(manifest: Manifest, head: ZeroShotHead, rescore: bool) -> CandidatePool:
    clip = manifest.load("clip_candidates")
    dino = manifest.load("dino_candidates")
    scores = load_scores(manifest.bank_path("candidate_scores"))
    pool = CandidatePool(clip, dino, scores)
    check_labels(pool.labels, manifest.n_classes, "candidate labels")
    if rescore:
        pool = CandidatePool(pool.clip, pool.dino,
                             recompute_scores(pool, head.text_matrix))
    return pool


def _assemble(args, manifest: Manifest, head: ZeroShotHead):
    """Sample, optionally expand, and return (merged_clip, merged_dino, values)."""
    shots = manifest.shots if args.shots is None else args.shots
    seed = manifest.seed if args.seed is None else args.seed
    if shots < 0 or args.synthetic_k < 0:
        raise DataError("shots and synthetic-k must be non-negative")
    support_clip, support_dino = _load_support(manifest, shots, seed)
    filtered = None
    if args.synthetic_k > 0:
        filtered = filter_top_k(_load_pool(manifest, head, args.rescore),
                                args.synthetic_k)
    if support_clip is None and filtered is None:
        raise DataError("nothing to cache: shots=0 and synthetic-k=0")
    return expand_support(support_clip, support_dino, filtered,
                          n_classes=manifest.n_classes)


def _load_head(manifest: Manifest) -> ZeroShotHead:
    return ZeroShotHead.from_bank(manifest.load("text_head"))


def _load_queries(manifest: Manifest):
    clip = manifest.load("clip_query")
    dino = manifest.load("dino_query")
    if clip.labels is None:
        raise ManifestError("query banks must carry labels for evaluation")
    check_paired(clip, dino, "query banks")
    check_labels(clip.labels, manifest.n_classes, "query labels")
    return clip, dino


def _train_config(args, seed: int, beta: float) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr0=args.lr,
        weight_decay=args.weight_decay, seed=seed, beta_sharpness=beta,
        mode=args.mode, detach_weights=args.detach_weights,
        loss_branch=args.loss_branch,
    ).validate()


def cmd_expand(args) -> int:
    manifest = load_manifest(args.manifest)
    head = _load_head(manifest)
    merged_clip, merged_dino, _ = _assemble(args, manifest, head)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_bank(out / "clip_support.mkeb", merged_clip)
    write_bank(out / "dino_support.mkeb", merged_dino)
    shots = manifest.shots if args.shots is None else args.shots

    def rel(name: str) -> str:
        # untouched banks are referenced from the new manifest's directory
        return os.path.relpath(manifest.bank_path(name).resolve(), out.resolve())

    expanded = Manifest(
        class_names=manifest.class_names,
        shots=shots + args.synthetic_k,
        seed=manifest.seed if args.seed is None else args.seed,
        banks={
            "clip_support": "clip_support.mkeb",
            "dino_support": "dino_support.mkeb",
            "clip_query": rel("clip_query"),
            "dino_query": rel("dino_query"),
            "text_head": rel("text_head"),
        },
        root=out,
    )
    write_manifest(out / "manifest.json", expanded)
    print(f"wrote expanded banks to {out}", file=sys.stderr)
    return 0


def _build_cache(args, manifest: Manifest, head: ZeroShotHead) -> CacheModel:
    merged_clip, merged_dino, values = _assemble(args, manifest, head)
    return CacheModel(merged_clip.features, merged_dino.features, values,
                      beta=args.beta)


def cmd_build(args) -> int:
    manifest = load_manifest(args.manifest)
    head = _load_head(manifest)
    cache = _build_cache(args, manifest, head)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_cache(out / "cache.mkcp", cache)
    print(f"wrote {out / 'cache.mkcp'} ({cache.n_rows} rows)", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    head = _load_head(manifest)
    seed = manifest.seed if args.seed is None else args.seed
    merged_clip, merged_dino, values = _assemble(args, manifest, head)
    cache = CacheModel(merged_clip.features, merged_dino.features, values,
                       beta=args.beta)
    cfg = _train_config(args, seed, args.beta)
    result = train(cache, head, merged_clip.features, merged_dino.features,
                   merged_clip.labels, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_cache(out / "cache.mkcp", result.cache)
    trace = "".join(f"{epoch}\t{loss:.12g}\n"
                    for epoch, loss in enumerate(result.epoch_losses, start=1))
    (out / "loss_trace.tsv").write_text(trace, encoding="utf-8")
    print(f"wrote {out / 'cache.mkcp'} and loss trace", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    head = _load_head(manifest)
    if args.checkpoint is not None:
        cache = load_cache(args.checkpoint)
    else:
        cache = _build_cache(args, manifest, head)
    query_clip, query_dino = _load_queries(manifest)
    fused = fused_logits(cache, head, query_clip.features, query_dino.features,
                         args.mode)
    print(evaluate(fused, query_clip.labels).tsv_row())
    return 0


def _eval_once(args, manifest, head, queries, beta: float, synthetic_k: int,
               mode: str):
    args.synthetic_k = synthetic_k
    merged_clip, merged_dino, values = _assemble(args, manifest, head)
    cache = CacheModel(merged_clip.features, merged_dino.features, values,
                       beta=beta)
    if args.epochs > 0:
        seed = manifest.seed if args.seed is None else args.seed
        cfg = _train_config(args, seed, beta)
        cfg.mode = mode
        cache = train(cache, head, merged_clip.features, merged_dino.features,
                      merged_clip.labels, cfg).cache
    query_clip, query_dino = queries
    fused = fused_logits(cache, head, query_clip.features, query_dino.features,
                         mode)
    return evaluate(fused, query_clip.labels)


def cmd_sweep(args) -> int:
    if not args.beta_grid and not args.kprime_grid:
        print("fewbank sweep: error: pass --beta-grid and/or --kprime-grid",
              file=sys.stderr)
        return 1
    manifest = load_manifest(args.manifest)
    head = _load_head(manifest)
    queries = _load_queries(manifest)
    betas = BETA_GRID if args.beta_grid else (args.beta,)
    kprimes = KPRIME_GRID if args.kprime_grid else (args.synthetic_k,)
    for beta in betas:
        for kp in kprimes:
            report = _eval_once(args, manifest, head, queries, beta, kp,
                                args.mode)
            print(f"{beta:g}\t{kp}\t{report.tsv_row()}")
    return 0


def cmd_ablate(args) -> int:
    manifest = load_manifest(args.manifest)
    head = _load_head(manifest)
    queries = _load_queries(manifest)
    for mode in MODES:
        report = _eval_once(args, manifest, head, queries, args.beta,
                            args.synthetic_k, mode)
        print(f"{mode}\t{report.tsv_row()}")
    return 0


def cmd_synth_fixture(args) -> int:
    if args.kind == "complementary":
        fx = fixture_mod.make_complementary_fixture(seed=args.seed)
    else:
        fx = fixture_mod.make_gaussian_fixture(seed=args.seed)
    path = fixture_mod.write_fixture(fx, args.out)
    print(f"wrote {path}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"fewbank: missing file: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"fewbank: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

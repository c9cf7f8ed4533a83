"""Command-line mirror of ExtractJob: image folders in, bank files out."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .encoders import EncoderLoadError
from .extract import ExtractJob, run_extract


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fewbank-extract", description=__doc__)
    p.add_argument("--root", required=True, help="image root, one subfolder per class")
    p.add_argument("--out", required=True, help="output directory for banks + manifest")
    p.add_argument("--query-root", default=None,
                   help="separate folder for query images (default: reuse --root)")
    p.add_argument("--classes", nargs="*", default=None,
                   help="explicit class list (default: sorted subfolder names)")
    p.add_argument("--clip-encoder", default="toy-clip",
                   help="toy-clip or clip:<model-id>")
    p.add_argument("--dino-encoder", default="toy-dino",
                   help="toy-dino or dino:<model-id>")
    p.add_argument("--template", default="a photo of a {}.",
                   help="prompt template; {} is replaced by the class name")
    p.add_argument("--template-file", default=None,
                   help="JSON with optional 'template' and 'class_prompts' overrides")
    p.add_argument("--text-head", choices=("encoder", "prototypes"),
                   default="encoder",
                   help="text tower of the clip encoder, or normalized class "
                        "centroids of the clip support features")
    p.add_argument("--generate", type=int, default=0,
                   help="candidates to generate per class (0 = off)")
    p.add_argument("--generator", default="stub")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=32)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    template = args.template
    class_prompts = {}
    if args.template_file:
        try:
            overrides = json.loads(Path(args.template_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"fewbank-extract: bad template file: {exc}", file=sys.stderr)
            return 2
        template = overrides.get("template", template)
        class_prompts = dict(overrides.get("class_prompts", {}))
    job = ExtractJob(
        image_root=Path(args.root),
        out_dir=Path(args.out),
        class_names=args.classes or None,
        clip_encoder=args.clip_encoder,
        dino_encoder=args.dino_encoder,
        template=template,
        class_prompts=class_prompts,
        query_root=Path(args.query_root) if args.query_root else None,
        text_head=args.text_head,
        generate=args.generate,
        generator=args.generator,
        seed=args.seed,
        batch_size=args.batch_size,
    )
    try:
        manifest = run_extract(job)
    except EncoderLoadError as exc:
        print(f"fewbank-extract: fatal: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"fewbank-extract: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {manifest}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())

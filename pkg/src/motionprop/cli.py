"""Command line: train / eval / sample-guidance / visualize / gen-corpus
/ ablate-strides / serve. Failures print one machine-readable JSON
object to stderr and exit nonzero."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "usage", "message": message}), file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> CliParser:
    p = CliParser(prog="motionprop")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.add_argument("--quiet", action="store_true")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--corpus", required=True, help="corpus manifest.json")
    e.add_argument("--sweep-guidance", action="store_true")
    e.add_argument("--zero-guidance", action="store_true")
    e.add_argument("--short-side", type=int, default=72)
    e.add_argument("--crop", type=int, default=64)
    e.add_argument("--k", type=int, default=13)
    e.add_argument("--g", type=int, default=32)
    e.add_argument("--edge-threshold", type=float, default=1.0)
    e.add_argument("--border-margin", type=int, default=3)
    e.add_argument("--out", default=None, help="write the report JSON here")

    s = sub.add_parser("sample-guidance", help="sample guidance points from a .flo file")
    s.add_argument("--flo", required=True)
    s.add_argument("--k", type=int, default=81)
    s.add_argument("--g", type=int, default=200)
    s.add_argument("--edge-threshold", type=float, default=1.0)
    s.add_argument("--border-margin", type=int, default=16)
    s.add_argument("--out", required=True, help="output points.json")

    v = sub.add_parser("visualize", help="render a .flo file with the color wheel")
    v.add_argument("--flo", required=True)
    v.add_argument("--out", required=True, help="output PNG path")
    v.add_argument("--max-magnitude", type=float, default=None)

    g = sub.add_parser("gen-corpus", help="generate a synthetic corpus on disk")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--size", type=int, required=True)
    g.add_argument("--seed", type=int, default=17)
    g.add_argument("--out", required=True)

    a = sub.add_parser("ablate-strides", help="train every propagation-stride combination")
    a.add_argument("--config", required=True)
    a.add_argument("--budget-scale", type=float, default=0.25)
    a.add_argument("--out", default=None, help="write the comparison table JSON here")

    w = sub.add_parser("write-config", help="write the desk-scale default config")
    w.add_argument("--out", required=True)

    r = sub.add_parser("serve", help="start the annotation HTTP service")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--host", default="127.0.0.1")
    r.add_argument("--port", type=int, default=8750)
    r.add_argument("--max-image-side", type=int, default=512)
    r.add_argument("--ui-dir", default=None)
    return p


def _cmd_train(args) -> int:
    from .training import TrainConfig, train

    cfg = TrainConfig.from_json(args.config)
    log = None if args.quiet else (lambda r: print(json.dumps(r), flush=True))
    result = train(cfg, resume=args.resume, log_fn=log)
    print(json.dumps({"checkpoint": result.checkpoint, "iterations": result.model.iteration}))
    return 0


def _cmd_eval(args) -> int:
    from .data import load_corpus
    from .guidance import SamplingConfig
    from .model import MotionPropNet
    from .training import evaluate, guidance_sweep

    model = MotionPropNet.load(args.ckpt)
    items = load_corpus(args.corpus)
    sampling = SamplingConfig(args.k, args.g, args.edge_threshold, args.border_margin)
    report = {
        "default": evaluate(model, items, sampling, args.short_side, args.crop).to_dict(),
        "zero_guidance": evaluate(model, items, None, args.short_side, args.crop).to_dict(),
    }
    if args.sweep_guidance:
        report["sweep"] = guidance_sweep(model, items, args.short_side, args.crop)
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


def _cmd_sample_guidance(args) -> int:
    from .flow import read_flo
    from .guidance import SamplingConfig, sample_guidance

    flow = read_flo(Path(args.flo).read_bytes())
    cfg = SamplingConfig(args.k, args.g, args.edge_threshold, args.border_margin)
    gset = sample_guidance(flow, cfg)
    Path(args.out).write_text(gset.to_json())
    print(json.dumps({"points": len(gset), "watershed": gset.count("watershed"), "grid": gset.count("grid")}))
    return 0


def _cmd_visualize(args) -> int:
    from .flow import flow_to_color, read_flo

    flow = read_flo(Path(args.flo).read_bytes())
    flow_to_color(flow, args.max_magnitude).save(args.out)
    print(json.dumps({"out": args.out, "width": flow.width, "height": flow.height}))
    return 0


def _cmd_gen_corpus(args) -> int:
    from .data import generate_synthetic, write_corpus

    samples = generate_synthetic(args.count, args.size, args.seed)
    manifest = write_corpus(samples, args.out)
    print(json.dumps({"manifest": str(manifest), "count": len(samples)}))
    return 0


def _cmd_ablate(args) -> int:
    from .training import TrainConfig, run_stride_ablation

    cfg = TrainConfig.from_json(args.config)
    result = run_stride_ablation(cfg, budget_scale=args.budget_scale)
    print(result["table"])
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2))
    return 0


def _cmd_write_config(args) -> int:
    from .training import desk_preset

    desk_preset().save_json(args.out)
    print(json.dumps({"out": args.out}))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    ui = args.ui_dir if args.ui_dir and Path(args.ui_dir).is_dir() else None
    app = create_app(ckpt=args.ckpt, max_image_side=args.max_image_side, ui_dir=ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sample-guidance": _cmd_sample_guidance,
    "visualize": _cmd_visualize,
    "gen-corpus": _cmd_gen_corpus,
    "ablate-strides": _cmd_ablate,
    "write-config": _cmd_write_config,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SystemExit:
        raise
    except Exception as exc:  # surface every failure as machine-readable JSON
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

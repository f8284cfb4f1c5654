"""Command-line entry point: ``lwplg <command> ...``.

Exit codes: 0 success, 1 verification failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, ops
from .config import VARIANTS, ConfigError, load_config, save_config, variant_config
from .imageio import ImageFormatError, read_image, to_input
from .model import MIN_INPUT, LWPLGViT
from .tensor import ShapeError, Tensor, no_grad
from .weights import WeightsFormatError, load_weights, save_weights

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad size {text!r}; expected H or HxW") from None
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2 or min(dims) < MIN_INPUT:
        raise UsageError(f"bad size {text!r}; expected H or HxW with both >= {MIN_INPUT}")
    return dims[0], dims[1]


def parse_sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad size list {text!r}; expected comma-separated integers") from None
    if not sizes or min(sizes) < MIN_INPUT:
        raise UsageError(f"sizes must be non-empty and >= {MIN_INPUT}")
    return sizes


# -- commands -----------------------------------------------------------------------

def describe_lines(name: str) -> list[str]:
    cfg = variant_config(name)
    lines = [f"variant {name}: stem C={cfg.stem_channels}, expansion C={cfg.expansion_channels}"]
    for i, st in enumerate(cfg.stages, 1):
        lsa = f"lsa {st.lsa.window}/{st.lsa.heads}"
        gsa = f"gsa {st.gsa.window}/{st.gsa.heads}" if st.gsa else "gsa: absent"
        lines.append(f"stage {i}: blocks={st.repeats}, C={st.channels}, {lsa}, {gsa}, "
                     f"r={st.split_ratio}, head_dim={st.head_dim}")
    return lines


def cmd_describe(args) -> int:
    print("\n".join(describe_lines(args.variant)))
    return EXIT_OK


def cmd_params(args) -> int:
    net = LWPLGViT(variant_config(args.variant, num_classes=args.classes))
    rep = analysis.count_params(net)
    if args.json:
        print(json.dumps(rep.as_dict(), indent=2))
    elif args.csv:
        print("group,params")
        for g, n in rep.by_group.items():
            print(f"{g},{n}")
        print(f"total,{rep.total}")
    else:
        for g, n in rep.by_group.items():
            print(f"{g:>8}  {n:>10,d}")
        print(f"{'total':>8}  {rep.total:>10,d}  ({rep.total / 1e6:.2f}M)")
    return EXIT_OK


def cmd_flops(args) -> int:
    h, w = parse_size(args.size)
    cfg = variant_config(args.variant, num_classes=args.classes)
    rep = analysis.count_flops(cfg, h, w)
    if args.json:
        print(json.dumps(rep.as_dict(), indent=2))
        return EXIT_OK
    groups = ["stem"] + [f"stages/{i}" for i in range(len(cfg.stages))] + ["expand", "head"]
    for g in groups:
        print(f"{g:>9}  {rep.by_prefix(g) / 1e6:10.2f} M")
    print(f"{'total':>9}  {rep.total / 1e9:10.4f} G  ({analysis.CONVENTION})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sizes = parse_sizes(args.sizes)
    cfg = variant_config(args.variant, num_classes=args.classes)
    text = analysis.sweep_csv(analysis.resolution_sweep(cfg, sizes, naive_global=args.naive))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .verify import TOL, run_suite

    results = run_suite(args.scope, seed=args.seed, perturb=args.perturb)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{r.name:<{width}}  max_rel_err={r.max_rel_error:.3e}  elems={r.elements:<6d} {status}")
    print(f"{len(results) - failed}/{len(results)} passed (tolerance {TOL:g})")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_train_toy(args) -> int:
    from .toy import DivergenceError, train_toy

    try:
        net, res = train_toy(args.classes, args.steps, args.lr, args.seed, batch=args.batch, init=args.init,
                             log=print)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"final loss {res.losses[-1]:.4f}  train accuracy {res.accuracy:.4f}")
    if args.out:
        save_weights(net.state(), args.out)
        save_config(net.cfg, sidecar_path(args.out))
    return EXIT_OK


def sidecar_path(weights) -> Path:
    return Path(str(weights) + ".config.json")


def _infer_config(args):
    if args.config:
        return load_config(args.config)
    if args.variant is None and args.weights and sidecar_path(args.weights).exists():
        return load_config(sidecar_path(args.weights))
    return variant_config(args.variant or "A", num_classes=args.classes)


def cmd_infer(args) -> int:
    h, w = parse_size(args.size)
    cfg = _infer_config(args)
    net = LWPLGViT(cfg, seed=args.seed)
    if args.weights:
        net.load_state(load_weights(args.weights))
    x = Tensor(to_input(read_image(args.image), cfg.img_channels))
    with no_grad():
        x = ops.bilinear_resize(x, h, w)
        probs = ops.softmax(net(x), axis=-1).data[0]
    for rank, idx in enumerate(np.argsort(-probs, kind="stable")[: args.top], 1):
        print(f"{rank}  class={int(idx)}  score={float(probs[idx]):.6f}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lwplg", description="LW PLG-ViT analysis and verification tools")
    sub = p.add_subparsers(dest="command", required=True)

    def variant(sp):
        sp.add_argument("--variant", choices=list(VARIANTS), required=True)

    sp = sub.add_parser("describe", help="per-stage configuration table")
    variant(sp)
    sp.set_defaults(func=cmd_describe)

    sp = sub.add_parser("params", help="exact parameter counts")
    variant(sp)
    sp.add_argument("--classes", type=int, default=1000)
    fmt = sp.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--csv", action="store_true")
    sp.set_defaults(func=cmd_params)

    sp = sub.add_parser("flops", help="analytic FLOPs (1 MAC = 1 FLOP)")
    variant(sp)
    sp.add_argument("--size", default="224", help="H or HxW")
    sp.add_argument("--classes", type=int, default=1000)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_flops)

    sp = sub.add_parser("sweep", help="FLOPs over square input sizes as CSV")
    variant(sp)
    sp.add_argument("--sizes", default="224,448,896")
    sp.add_argument("--classes", type=int, default=1000)
    sp.add_argument("--naive", action="store_true", help="global branch attends over all tokens (reference)")
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    sp.add_argument("--scope", choices=("op", "block", "model", "all"), default="all")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--perturb", type=float, default=0.0,
                    help="shift inputs after the analytic pass; a working harness must then fail")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("train-toy", help="SGD on the synthetic shape task with the micro model")
    sp.add_argument("--classes", type=int, default=3)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--lr", type=float, default=3e-3)
    sp.add_argument("--batch", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--init", choices=("trunc_normal", "fan_in"), default="trunc_normal",
                    help="weight draw; trunc_normal(0.02) is the model default")
    sp.add_argument("--out", help="weights file; the config is written next to it")
    sp.set_defaults(func=cmd_train_toy)

    sp = sub.add_parser("infer", help="top-k classes for one PPM/PGM image")
    sp.add_argument("--image", required=True)
    sp.add_argument("--weights")
    sp.add_argument("--size", default="224", help="H or HxW")
    sp.add_argument("--config", help="model config JSON (default: sidecar of --weights)")
    sp.add_argument("--variant", choices=list(VARIANTS))
    sp.add_argument("--classes", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--top", type=int, default=5)
    sp.set_defaults(func=cmd_infer)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        for name in ("classes", "steps", "batch", "top"):
            if getattr(args, name, 1) < 1:
                raise UsageError(f"--{name} must be >= 1")
        return args.func(args)
    except (UsageError, ConfigError, ShapeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"lwplg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImageFormatError, WeightsFormatError, OSError) as exc:
        print(f"lwplg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

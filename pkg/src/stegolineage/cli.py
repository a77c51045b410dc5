"""Command-line entry point.

Machine output (hex, JSON, CSV) goes to stdout or ``--out``; diagnostics go
to stderr. Exit status: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import bench, channel, theory
from .imaging import load_image, psnr, save_image, ssim
from .phylogeny import TreeManifest, build_tree, inherit, match_query, tree_key
from .projector import KINDS, FeatureDir, Projector, ProjectorSpec, Trait, read_features
from .stego import IssParams, QimParams, Stego

log = logging.getLogger("stegolineage")


def seed_int(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def rate(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("rate must lie in [0, 1]")
    return value


# --- shared flag groups ---------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=seed_int, default=0, help="64-bit seed (decimal or 0x-hex); stego key or RNG seed")
    p.add_argument("--out", help="write machine output (or the output image) here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _projector_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--projector", choices=KINDS, default="sha256", help="trait projector")
    p.add_argument("--bits", type=int, default=64, help="trait length n (phash is always 64)")
    p.add_argument("--proj-seed", type=seed_int, default=0, help="seed of the randproj projection matrix")
    p.add_argument("--features", help="randproj features: a file for one image, or a directory of <id>.fvec files")
    p.add_argument("--pad", action="store_true", help="resize inputs to 256x256 before processing")
    return p


def _stego_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--stego", choices=("qim", "iss"), default="qim", help="stegosystem")
    p.add_argument("--delta", type=float, default=QimParams.delta, help="QIM quantisation step")
    p.add_argument("--alpha", type=float, default=IssParams.alpha, help="ISS signal amplitude")
    p.add_argument("--lam", type=float, default=IssParams.lam, help="ISS host-rejection factor in [0, 1]")
    p.add_argument("--passes", type=int, default=1, help="embedding refinement passes")
    return p


def _bench_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--pool", required=True, help="tree manifest (manifest.json)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads; output is identical for any value")
    p.add_argument("--summary", help="also write a JSON summary (config echo, manifest hash) here")
    return p


def _make_stego(args) -> Stego:
    if args.stego == "qim":
        return Stego("qim", QimParams(delta=args.delta, passes=args.passes))
    return Stego("iss", IssParams(alpha=args.alpha, lam=args.lam, passes=args.passes))


def _make_projector(args, spec: ProjectorSpec | None = None) -> Projector:
    spec = spec or ProjectorSpec(args.projector, 64 if args.projector == "phash" else args.bits, args.proj_seed)
    features = None
    if spec.kind == "randproj" and args.features:
        path = Path(args.features)
        if path.is_dir():
            features = FeatureDir(path)
        else:
            vec = read_features(path)
            features = lambda img, key=None: vec  # noqa: E731
    return Projector(spec, features)


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _need_out(args) -> Path:
    if not args.out:
        raise ValueError("--out is required for image output")
    return Path(args.out)


# --- subcommands ----------------------------------------------------------

def cmd_project(args) -> int:
    img = load_image(args.image, pad=args.pad)
    trait = _make_projector(args).project(img, Path(args.image).stem)
    _emit(args, trait.hex() + "\n")
    return 0


def cmd_embed(args) -> int:
    cover = load_image(args.cover, pad=args.pad)
    trait = Trait.from_hex(args.trait)
    stego_img = _make_stego(args).embed(cover, trait, args.seed)
    save_image(stego_img, _need_out(args))
    log.info("psnr %.2f dB", psnr(cover, stego_img))
    return 0


def cmd_extract(args) -> int:
    img = load_image(args.image, pad=args.pad)
    _emit(args, _make_stego(args).extract(img, args.seed, args.bits).hex() + "\n")
    return 0


def cmd_inherit(args) -> int:
    parent = load_image(args.parent, pad=args.pad)
    cover = load_image(args.cover, pad=args.pad)
    stego = _make_stego(args)
    projector = _make_projector(args)
    child, trait = inherit(parent, cover, projector, stego, args.seed, Path(args.parent).stem)
    save_image(child, _need_out(args))
    record = {
        "parent": str(args.parent),
        "path": str(args.out),
        "key_seed": f"{args.seed:016x}",
        "projector": projector.spec.to_dict(),
        "stego": stego.to_dict(),
        "trait_embedded": trait.hex(),
    }
    sys.stdout.write(_json(record))
    return 0


def cmd_tree_build(args) -> int:
    projector = _make_projector(args)
    manifest = build_tree(args.roots, args.branching, projector, _make_stego(args), args.seed, args.out_dir,
                          jobs=args.jobs, covers_dir=args.covers_dir, pad=args.pad, max_roots=args.max_roots)
    roots = sum(1 for n in manifest.nodes if n.parent_id is None)
    summary = {"manifest": str(Path(args.out_dir) / "manifest.json"), "nodes": len(manifest.nodes),
               "roots": roots, "key_seed": f"{tree_key(args.seed):016x}", "sha256": manifest.digest()}
    _emit(args, _json(summary))
    return 0


def _manifest_projector(args, manifest: TreeManifest) -> Projector:
    spec = manifest.nodes[0].projector if manifest.nodes else None
    if args.projector_override:
        spec = None
    return _make_projector(args, spec)


def cmd_match(args) -> int:
    manifest = TreeManifest.read(args.pool)
    if not manifest.nodes:
        raise ValueError(f"{args.pool}: empty pool")
    query = load_image(args.query, pad=args.pad)
    projector = _manifest_projector(args, manifest)
    stego = Stego.from_dict(manifest.stego)
    key = args.key if args.key is not None else manifest.key_seed
    result = match_query(query, manifest, projector, stego, key, args.threshold, args.k,
                         exclude=args.exclude or (), jobs=args.jobs)
    _emit(args, _json(result.to_dict()))
    return 0


def cmd_channel_apply(args) -> int:
    img = load_image(args.image, pad=args.pad)
    out = channel.apply(img, channel.ChannelOp(args.op, args.severity, args.seed))
    save_image(out, _need_out(args))
    return 0


def cmd_theory_curve(args) -> int:
    _emit(args, theory.curve_csv(theory.accuracy_curve(args.n, args.p, args.q, args.N)))
    return 0


def cmd_theory_check(args) -> int:
    tp = theory.TheoryParams(args.n, args.p, args.q, args.N)
    closed = theory.phylo_accuracy(tp)
    est, se = theory.mc_accuracy(tp, args.trials, args.seed)
    tol = 4.0 * math.sqrt(closed * (1.0 - closed) / args.trials)
    ok = abs(est - closed) <= tol
    _emit(args, _json({"n": args.n, "p": args.p, "q": args.q, "N": args.N, "trials": args.trials,
                       "closed_form": closed, "monte_carlo": est, "std_error": se, "within_4se": ok}))
    return 0 if ok else 1


def _bench_setup(args):
    manifest = TreeManifest.read(args.pool)
    if not manifest.nodes:
        raise ValueError(f"{args.pool}: empty pool")
    stego = Stego.from_dict(manifest.stego)
    return manifest, stego


def _bench_finish(args, manifest, rows, config) -> int:
    _emit(args, bench.rows_to_csv(rows))
    if args.summary:
        Path(args.summary).write_text(bench.summary_json(manifest, config), encoding="utf-8", newline="\n")
    return 0


def cmd_bench_distortion(args) -> int:
    manifest, stego = _bench_setup(args)
    rows = []
    for op in args.op:
        rows += bench.estimate_stego_agreement(manifest, op, args.severities, stego, seed=args.seed, jobs=args.jobs)
    return _bench_finish(args, manifest, rows, {"bench": "distortion", "ops": args.op,
                                                "severities": args.severities, "seed": args.seed})


def cmd_bench_retrieval(args) -> int:
    manifest, stego = _bench_setup(args)
    projector = _manifest_projector(args, manifest)
    images = manifest.load_all(args.jobs)
    rows = []
    for op in args.op:
        rows += bench.run_distortion_retrieval(manifest, op, args.severities, projector, stego, seed=args.seed,
                                               jobs=args.jobs, images=images)
    return _bench_finish(args, manifest, rows, {"bench": "retrieval", "ops": args.op, "severities": args.severities,
                                                "projector": projector.spec.to_dict(), "seed": args.seed})


def cmd_bench_inclusion(args) -> int:
    manifest, stego = _bench_setup(args)
    projector = _manifest_projector(args, manifest)
    points = bench.run_inclusion(manifest, args.extraneous, args.ratios, args.threshold, projector, stego,
                                 seed=args.seed, jobs=args.jobs)
    rows = bench.pr_rows("inclusion", points, projector.spec.kind, stego.method)
    return _bench_finish(args, manifest, rows, {"bench": "inclusion", "ratios": args.ratios,
                                                "threshold": args.threshold, "seed": args.seed})


def cmd_bench_deletion(args) -> int:
    manifest, stego = _bench_setup(args)
    projector = _manifest_projector(args, manifest)
    points = bench.run_deletion(manifest, args.ratios, args.threshold, projector, stego,
                                seed=args.seed, jobs=args.jobs)
    rows = bench.pr_rows("deletion", points, projector.spec.kind, stego.method)
    return _bench_finish(args, manifest, rows, {"bench": "deletion", "ratios": args.ratios,
                                                "threshold": args.threshold, "seed": args.seed})


def cmd_quality(args) -> int:
    a = load_image(args.a, pad=args.pad)
    b = load_image(args.b, pad=args.pad)
    value = psnr(a, b)
    _emit(args, _json({"psnr": "inf" if math.isinf(value) else value, "ssim": ssim(a, b)}))
    return 0


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common, projf, stegof, benchf = _common(), _projector_flags(), _stego_flags(), _bench_flags()
    parser = argparse.ArgumentParser(prog="stegolineage", description="Steganographic inheritance for images.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("project", parents=[common, projf], help="print an image's trait as hex")
    p.add_argument("image")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("embed", parents=[common, stegof], help="embed a hex trait into a cover")
    p.add_argument("--cover", required=True, help="cover image")
    p.add_argument("--trait", required=True, help="trait as lowercase hex")
    p.add_argument("--pad", action="store_true", help="resize the cover to 256x256 first")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", parents=[common, stegof], help="blindly extract a trait")
    p.add_argument("image")
    p.add_argument("--bits", type=int, default=64, help="trait length n")
    p.add_argument("--pad", action="store_true", help="resize to 256x256 first")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("inherit", parents=[common, projf, stegof], help="embed the parent's trait into an offspring cover")
    p.add_argument("--parent", required=True, help="parent image whose trait is inherited")
    p.add_argument("--cover", required=True, help="offspring cover image")
    p.set_defaults(func=cmd_inherit)

    tree = sub.add_parser("tree", help="phylogenetic tree construction").add_subparsers(
        dest="tree_command", required=True, metavar="action")
    p = tree.add_parser("build", parents=[common, projf, stegof], help="grow a tree from a directory of roots")
    p.add_argument("--roots", required=True, help="directory of root images")
    p.add_argument("--out-dir", required=True, help="directory for images and manifest.json")
    p.add_argument("--branching", type=int_list, default=[3, 2, 1], help="children per node per generation")
    p.add_argument("--max-roots", type=int, default=None, help="use only the first N roots (sorted by name)")
    p.add_argument("--covers-dir", help="directory of external offspring covers named <child id>.png")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    p.set_defaults(func=cmd_tree_build)

    p = sub.add_parser("match", parents=[common, projf], help="nominate the parent of a query or abstain")
    p.add_argument("--query", required=True, help="query image")
    p.add_argument("--pool", required=True, help="tree manifest")
    p.add_argument("--threshold", type=rate, default=0.75, help="minimum agreement rate to nominate")
    p.add_argument("--k", type=int, default=5, help="ranked list depth")
    p.add_argument("--key", type=seed_int, default=None, help="stego key seed (default: the manifest's)")
    p.add_argument("--exclude", action="append", help="candidate id to leave out (repeatable)")
    p.add_argument("--projector-override", action="store_true",
                   help="use --projector/--bits/--proj-seed instead of the manifest's projector")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    p.set_defaults(func=cmd_match)

    ch = sub.add_parser("channel", help="processing operations").add_subparsers(
        dest="channel_command", required=True, metavar="action")
    p = ch.add_parser("apply", parents=[common], help="apply one operation at a severity")
    p.add_argument("image")
    p.add_argument("--op", required=True, choices=channel.OPS, help="operation name")
    p.add_argument("--severity", type=float, required=True, help="signed ops take [-1, 1], others [0, 1]")
    p.add_argument("--pad", action="store_true", help="resize to 256x256 first")
    p.set_defaults(func=cmd_channel_apply)

    th = sub.add_parser("theory", help="closed-form phylogenetic accuracy").add_subparsers(
        dest="theory_command", required=True, metavar="action")
    p = th.add_parser("curve", parents=[common], help="CSV of accuracy over a (p, q, N) grid")
    p.add_argument("--n", type=int, default=64, help="trait bits")
    p.add_argument("--p", type=float_list, default=[0.5, 0.55, 0.6], help="projector agreement rates")
    p.add_argument("--q", type=float_list, default=[round(0.5 + 0.05 * i, 2) for i in range(11)],
                   help="stegosystem bit accuracies")
    p.add_argument("--N", type=int_list, default=[10, 100, 1600], help="pool sizes")
    p.set_defaults(func=cmd_theory_curve)
    p = th.add_parser("check", parents=[common], help="closed form versus Monte Carlo")
    p.add_argument("--n", type=int, default=64, help="trait bits")
    p.add_argument("--p", type=rate, default=0.5, help="projector agreement rate")
    p.add_argument("--q", type=rate, default=0.9, help="stegosystem bit accuracy")
    p.add_argument("--N", type=int, default=100, help="pool size")
    p.add_argument("--trials", type=int, default=100000, help="Monte Carlo trials")
    p.set_defaults(func=cmd_theory_check)

    bn = sub.add_parser("bench", help="desk-scale benchmarks over a tree manifest").add_subparsers(
        dest="bench_command", required=True, metavar="experiment")
    severities = dict(type=float_list, default=[0.0, 0.25, 0.5, 0.75, 1.0], help="comma-separated severities")
    p = bn.add_parser("distortion", parents=[common, benchf], help="stegosystem bit agreement under operations")
    p.add_argument("--op", action="append", choices=channel.OPS, required=True, help="operation (repeatable)")
    p.add_argument("--severities", **severities)
    p.set_defaults(func=cmd_bench_distortion)
    p = bn.add_parser("retrieval", parents=[common, benchf, projf], help="top-1 accuracy with every image edited")
    p.add_argument("--op", action="append", choices=channel.OPS, required=True, help="operation (repeatable)")
    p.add_argument("--severities", **severities)
    p.add_argument("--projector-override", action="store_true", help="ignore the manifest's projector")
    p.set_defaults(func=cmd_bench_retrieval)
    for name, helptext in (("inclusion", "precision/recall as extraneous images dilute the pool"),
                           ("deletion", "precision/recall as pool members are removed")):
        p = bn.add_parser(name, parents=[common, benchf, projf], help=helptext)
        p.add_argument("--ratios", type=float_list, default=[1.0, 0.5, 0.2, 0.1],
                       help="comma-separated pool ratios in (0, 1]")
        p.add_argument("--threshold", type=rate, default=0.75, help="minimum agreement rate to claim a pair")
        p.add_argument("--projector-override", action="store_true", help="ignore the manifest's projector")
        if name == "inclusion":
            p.add_argument("--extraneous", required=True, help="directory of unrelated images")
            p.set_defaults(func=cmd_bench_inclusion)
        else:
            p.set_defaults(func=cmd_bench_deletion)

    p = sub.add_parser("quality", parents=[common], help="PSNR and SSIM of an image pair")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--pad", action="store_true", help="resize both to 256x256 first")
    p.set_defaults(func=cmd_quality)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"stegolineage: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: file-based stages that compose via CSV/SFT/PGM."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import benchmark as bench
from . import density as dens
from . import io
from .cluster import DEFAULT_MORPH_WEIGHT, cluster_pixels
from .metrics import adjusted_rand_index, expression_table_csv
from .morphology import (
    DEFAULT_SAMPLE_CAP,
    DEFAULT_SCALES,
    DEFAULT_VARIANCE_TARGET,
    apply_pca,
    builtin_features,
    fit_pca,
    resample_to_grid,
)
from .synth import SynthConfig, generate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def _parse_scales(text):
    try:
        scales = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --scales value {text!r}") from None
    if not scales:
        raise UsageError("--scales must list at least one integer")
    return scales


def _parse_fractions(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --fractions value {text!r}") from None


def _parse_tied_pairs(text):
    pairs = []
    if not text:
        return tuple(pairs)
    for chunk in text.split(","):
        try:
            a, b = chunk.split(":")
            pairs.append((int(a), int(b)))
        except ValueError:
            raise UsageError(f"bad --tie-profiles entry {chunk!r}") from None
    return tuple(pairs)


def write_sidecar(out_path, command, params):
    """Flat `key: value` provenance lines, enough to re-run the command."""
    lines = [f"command: {command}"]
    for key, value in params.items():
        if value is not None:
            lines.append(f"{key}: {value}")
    Path(f"{out_path}.prov.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _add_common(p):
    p.add_argument("--threads", type=int, default=1,
                   help="worker thread cap; 1 guarantees bit-determinism (default 1)")


def _add_grid_flags(p):
    p.add_argument("--resolution", type=float, default=dens.DEFAULT_RESOLUTION,
                   help="image pixels per grid bin (default 4)")
    p.add_argument("--sigma", type=float, default=dens.DEFAULT_SIGMA,
                   help="Gaussian bandwidth in bins (default 2)")


def _add_morph_flags(p):
    p.add_argument("--scales", default=",".join(str(s) for s in DEFAULT_SCALES),
                   help="built-in feature window sizes in px (default 4,8,16,32)")
    p.add_argument("--variance", type=float, default=DEFAULT_VARIANCE_TARGET,
                   help="PCA cumulative explained-variance target (default 0.95)")
    p.add_argument("--sample-cap", type=int, default=DEFAULT_SAMPLE_CAP,
                   help="max pixels used to fit the PCA (default 100000)")
    p.add_argument("--morph-weight", type=float, default=DEFAULT_MORPH_WEIGHT,
                   help="weight on z-scored morphology columns (default 1.0)")


def build_parser():
    parser = _Parser(prog="sefi", description=(
        "Segmentation-free niche detection: fuse per-gene density maps with "
        "stain-morphology features, cluster pixels, and benchmark the gain."
    ))
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic tissue with known niches")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--niches", type=int, default=6)
    p.add_argument("--genes", type=int, default=33)
    p.add_argument("--density", type=float, default=0.02)
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--morph-signal", type=float, default=0.8)
    p.add_argument("--tie-profiles", default="",
                   help="niche pairs forced to share a gene profile, e.g. 1:2,3:4")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("density", help="rasterize and smooth per-gene density maps")
    p.add_argument("--points", required=True, help="x,y,gene CSV")
    p.add_argument("--out", required=True, help="output SFT path")
    _add_grid_flags(p)
    p.add_argument("--height-px", type=int, default=None,
                   help="image extent in px (default: derived from points)")
    p.add_argument("--width-px", type=int, default=None)
    p.add_argument("--compose", action="store_true",
                   help="normalize each bin to local composition fractions")
    _add_common(p)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("features", help="built-in morphology features from a stain image")
    p.add_argument("--image", required=True, help="grayscale PNG or PGM")
    p.add_argument("--out", required=True, help="output SFT path")
    p.add_argument("--scales", default=",".join(str(s) for s in DEFAULT_SCALES))
    _add_common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("cluster", help="fuse, k-means, and merge into a niche map")
    p.add_argument("--genes", required=True, help="gene density SFT")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--morph-from", help="morphology SFT (e.g. deep features)")
    src.add_argument("--image", help="stain image for built-in features")
    src.add_argument("--genes-only", action="store_true",
                     help="cluster on gene maps alone")
    p.add_argument("--epsilon", type=float, default=dens.DEFAULT_EPSILON,
                   help="foreground threshold on total density (default 1e-3)")
    p.add_argument("--k", type=int, default=None,
                   help="k-means cluster count (default: number of genes)")
    stop = p.add_mutually_exclusive_group()
    stop.add_argument("--final-k", type=int, default=None,
                      help="merge down to this many clusters")
    stop.add_argument("--merge-threshold", type=float, default=None,
                      help="stop before the first merge costlier than this")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output 16-bit PGM label map")
    p.add_argument("--png", default=None,
                   help="PNG rendering path (default: out with .png suffix)")
    _add_grid_flags(p)
    _add_morph_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("eval-ari", help="adjusted Rand index between two label maps")
    p.add_argument("--a", required=True, help="first label PGM")
    p.add_argument("--b", required=True, help="second label PGM")
    p.add_argument("--out", default=None, help="also write the score here")
    _add_common(p)
    p.set_defaults(func=cmd_eval_ari)

    p = sub.add_parser("expression-table", help="mean gene density per cluster, as CSV")
    p.add_argument("--labels", required=True, help="label PGM")
    p.add_argument("--genes", required=True, help="gene density SFT")
    p.add_argument("--out", required=True, help="output CSV")
    _add_grid_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_expression_table)

    p = sub.add_parser("benchmark-dropout",
                       help="gene-dropout ARI benchmark, genes vs genes+morphology")
    p.add_argument("--points", required=True, help="x,y,gene CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image", help="stain image for built-in features")
    src.add_argument("--morph-from", help="morphology SFT")
    p.add_argument("--fractions", default="1.0,0.75,0.5,0.25")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    stop = p.add_mutually_exclusive_group()
    stop.add_argument("--final-k", type=int, default=None)
    stop.add_argument("--merge-threshold", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=dens.DEFAULT_EPSILON)
    p.add_argument("--height-px", type=int, default=None)
    p.add_argument("--width-px", type=int, default=None)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--svg", default=None, help="optional mean +- sd line plot")
    _add_grid_flags(p)
    _add_morph_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_benchmark)

    return parser


def _require_stopping(args):
    if args.final_k is None and args.merge_threshold is None:
        raise UsageError(
            "a stopping criterion is required: pass --final-k or --merge-threshold"
        )


def cmd_synth(args):
    cfg = SynthConfig(
        seed=args.seed,
        height=args.height,
        width=args.width,
        n_niches=args.niches,
        n_genes=args.genes,
        density=args.density,
        alpha=args.alpha,
        morph_signal=args.morph_signal,
        tied_pairs=_parse_tied_pairs(args.tie_profiles),
    )
    truth, points, image = generate(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "points.csv").write_text(io.points_to_csv(points), encoding="utf-8")
    io.write_gray_png(out / "dapi.png", image.pixels)
    io.write_label_pgm(out / "truth.pgm", truth)
    for name in ("points.csv", "dapi.png", "truth.pgm"):
        write_sidecar(out / name, "synth", cfg.as_dict())
    print(f"wrote {points.n_points} points, {cfg.n_niches} niches to {out}")
    return EXIT_OK


def _load_points_grid(points_path, resolution, sigma, height_px, width_px):
    pc = io.parse_points(Path(points_path).read_text(encoding="utf-8"))
    if height_px is not None and width_px is not None:
        grid = dens.GridSpec.from_extent(height_px, width_px, resolution, sigma)
    elif height_px is None and width_px is None:
        grid = dens.GridSpec.from_points(pc, resolution, sigma)
    else:
        raise UsageError("--height-px and --width-px must be given together")
    return pc, grid


def cmd_density(args):
    pc, grid = _load_points_grid(
        args.points, args.resolution, args.sigma, args.height_px, args.width_px
    )
    gene_map = dens.gaussian_smooth(dens.rasterize_points(pc, grid))
    if args.compose:
        gene_map = dens.compose_normalize(gene_map)
    io.save_sft(args.out, gene_map.tensor)
    write_sidecar(args.out, "density", {
        "points": args.points,
        "resolution": grid.resolution,
        "sigma": grid.sigma,
        "height_bins": grid.height_bins,
        "width_bins": grid.width_bins,
        "compose": args.compose,
    })
    print(f"wrote {grid.height_bins}x{grid.width_bins}x{pc.n_genes} density map to {args.out}")
    return EXIT_OK


def cmd_features(args):
    image = io.load_gray_image(args.image)
    tensor = builtin_features(image, _parse_scales(args.scales))
    io.save_sft(args.out, tensor)
    write_sidecar(args.out, "features", {
        "image": args.image,
        "scales": args.scales,
    })
    print(f"wrote {tensor.height}x{tensor.width}x{tensor.channels} features to {args.out}")
    return EXIT_OK


def _reduced_morphology(args, grid, mask, seed):
    """Morphology block for cluster/benchmark: extract or load, resample, PCA."""
    if getattr(args, "genes_only", False):
        return None
    if args.morph_from:
        tensor = io.load_sft(args.morph_from)
    else:
        image = io.load_gray_image(args.image)
        tensor = builtin_features(image, _parse_scales(args.scales))
    tensor = resample_to_grid(tensor, grid.height_bins, grid.width_bins)
    model = fit_pca(tensor, mask, variance_target=args.variance,
                    sample_cap=args.sample_cap, seed=seed)
    return apply_pca(tensor, model)


def cmd_cluster(args):
    _require_stopping(args)
    tensor = io.load_sft(args.genes)
    grid = dens.GridSpec(args.resolution, args.sigma, tensor.height, tensor.width)
    gene_map = dens.GeneExpressionMap(tensor=tensor, grid=grid)
    mask = dens.foreground_mask(gene_map, args.epsilon)
    morph = _reduced_morphology(args, grid, mask, args.seed)

    label_map, km, tree = cluster_pixels(
        gene_map, morph, mask, w=args.morph_weight, k=args.k,
        final_k=args.final_k, merge_threshold=args.merge_threshold, seed=args.seed,
    )
    io.write_label_pgm(args.out, label_map)
    png_path = args.png or str(Path(args.out).with_suffix(".png"))
    io.render_label_png(png_path, label_map)

    params = {
        "genes": args.genes,
        "morph_from": args.morph_from,
        "image": args.image,
        "genes_only": getattr(args, "genes_only", False),
        "epsilon": args.epsilon,
        "k": km.centroids.shape[0],
        "final_k": args.final_k,
        "merge_threshold": args.merge_threshold,
        "n_clusters": label_map.n_clusters,
        "seed": args.seed,
        "resolution": args.resolution,
        "sigma": args.sigma,
        "scales": args.scales,
        "variance": args.variance,
        "sample_cap": args.sample_cap,
        "morph_weight": args.morph_weight,
    }
    write_sidecar(args.out, "cluster", params)
    write_sidecar(png_path, "cluster", params)
    print(f"wrote {label_map.n_clusters} clusters to {args.out}")
    return EXIT_OK


def cmd_eval_ari(args):
    score = adjusted_rand_index(io.read_label_pgm(args.a), io.read_label_pgm(args.b))
    text = f"ari: {score.value:.6f}\nn: {score.n}\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        write_sidecar(args.out, "eval-ari", {"a": args.a, "b": args.b})
    return EXIT_OK


def cmd_expression_table(args):
    labels = io.read_label_pgm(args.labels)
    tensor = io.load_sft(args.genes)
    grid = dens.GridSpec(args.resolution, args.sigma, tensor.height, tensor.width)
    csv_text = expression_table_csv(labels, dens.GeneExpressionMap(tensor, grid))
    Path(args.out).write_text(csv_text, encoding="utf-8")
    write_sidecar(args.out, "expression-table", {
        "labels": args.labels,
        "genes": args.genes,
    })
    print(f"wrote expression table to {args.out}")
    return EXIT_OK


def cmd_benchmark(args):
    _require_stopping(args)
    fractions = _parse_fractions(args.fractions)
    pc, grid = _load_points_grid(
        args.points, args.resolution, args.sigma, args.height_px, args.width_px
    )
    gene_map = dens.gaussian_smooth(dens.rasterize_points(pc, grid))
    mask = dens.foreground_mask(gene_map, args.epsilon)
    morph = _reduced_morphology(args, grid, mask, args.seed)
    if morph is None:
        raise UsageError("benchmark-dropout needs --image or --morph-from")

    result = bench.dropout_benchmark(
        pc, morph, grid, fractions, reps=args.reps, seed=args.seed,
        final_k=args.final_k, merge_threshold=args.merge_threshold,
        w=args.morph_weight, epsilon=args.epsilon,
    )
    Path(args.out).write_text(result.to_csv(), encoding="utf-8")
    params = {
        "points": args.points,
        "image": args.image,
        "morph_from": args.morph_from,
        "fractions": args.fractions,
        "reps": args.reps,
        "seed": args.seed,
        "final_k": args.final_k,
        "merge_threshold": args.merge_threshold,
        "epsilon": args.epsilon,
        "resolution": args.resolution,
        "sigma": args.sigma,
        "scales": args.scales,
        "variance": args.variance,
        "sample_cap": args.sample_cap,
        "morph_weight": args.morph_weight,
    }
    write_sidecar(args.out, "benchmark-dropout", params)
    if args.svg:
        Path(args.svg).write_text(bench.dropout_svg(result), encoding="utf-8")
        write_sidecar(args.svg, "benchmark-dropout", params)
    stats = result.by_fraction()
    for f in sorted(stats, reverse=True):
        s = stats[f]
        print(f"fraction {f:g}: genes {s['genes_mean']:.3f} "
              f"joint {s['joint_mean']:.3f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        with threadpool_limits(limits=max(1, args.threads)):
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def cli_entry():
    sys.exit(main())

"""Command line interface.

Verbs:

- ``synth``: generate a synthetic labeled corpus with a manifest.
- ``features extract``: dump feature vectors for files or fragments.
- ``sizes search``: compute pairwise error matrices and pick sizes.
- ``train``: build a dictionary bundle from a corpus manifest.
- ``classify``: classify a manifest split against a bundle.
- ``scan``: flag files whose fragments hit a payload class too often.
- ``bench``: time training and classification on synthetic matrices.

Exit codes: 0 on success, 2 for validation problems (bad flags, malformed
manifests or bundles, impossible shapes), 3 for runtime or numerical
failures (rank collapse, no feasible size assignment).
"""

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .bundle import load_bundle, save_bundle
from .corpus import CorpusManifest, SyntheticSourceSpec, synthesize_corpus
from .errors import RludictError, ValidationError
from .features import (
    SCHEME_DIMENSIONS,
    FeatureRecord,
    FragmentSpec,
    extract,
    sample_fragments,
    sample_offsets,
    write_feature_records,
)
from .pipeline import (
    DEFAULT_FRAGMENT_BYTES,
    DEFAULT_FRAGMENT_COUNT,
    MODE_FILE,
    MODE_FRAGMENTS,
    SCAN_THRESHOLD,
    SCAN_WINDOW_BYTES,
    TRAIN_FRAGMENT_BYTES,
    classify_from_manifest,
    file_fragment_seed,
    run_benchmarks,
    scan_paths,
    train_from_manifest,
    training_matrices,
)
from .rlu import DEFAULT_OVERSAMPLING
from .sizing import (
    all_pairwise_error_matrices,
    default_k_range,
    error_matrix_to_csv,
    error_matrix_to_json,
    evaluate_assignment,
    find_optimal_agreement,
)
from ._util import check_seed, derive_seed

_SCHEMES = sorted(SCHEME_DIMENSIONS)


def _seed_arg(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned integer, got {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _non_negative_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def parse_size_policy(text):
    """Parse the --k flag: 'auto', one int, or label=size pairs."""
    text = text.strip()
    if text == "auto":
        return "auto"
    if "=" in text:
        sizes = {}
        for token in text.split(","):
            label, _, value = token.partition("=")
            label = label.strip()
            if not label or not value.strip():
                raise ValidationError(f"bad --k entry {token!r}, expected label=size")
            try:
                sizes[label] = int(value)
            except ValueError:
                raise ValidationError(f"bad size in --k entry {token!r}") from None
        return sizes
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"--k must be 'auto', an integer, or label=size pairs, got {text!r}") from None


def parse_int_list(text, flag):
    values = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            values.append(int(token))
        except ValueError:
            raise ValidationError(f"{flag} must be a comma-separated integer list, got {text!r}") from None
    if not values:
        raise ValidationError(f"{flag} must name at least one integer")
    return values


def parse_shape(text):
    rows, _, cols = text.lower().partition("x")
    try:
        return int(rows), int(cols)
    except ValueError:
        raise ValidationError(f"--shape must look like 4096x256, got {text!r}") from None


def _add_common(parser, *, seed=True, workers=False):
    if seed:
        parser.add_argument("--seed", type=_seed_arg, default=0, help="root seed (u64)")
    if workers:
        parser.add_argument(
            "--workers", type=_positive_int, default=1, help="worker threads for per-file stages"
        )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rludict",
        description="Randomized LU dictionaries for content-based file type identification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="generate a synthetic labeled corpus")
    synth.add_argument("--out", required=True, help="corpus output directory")
    synth.add_argument("--classes", type=_positive_int, default=6, help="number of classes")
    synth.add_argument("--files-per-class", type=_positive_int, default=200)
    synth.add_argument("--bytes", type=_positive_int, default=65536, help="bytes per file")
    synth.add_argument("--labels", default=None, help="comma-separated class labels")
    _add_common(synth)

    features = commands.add_parser("features", help="feature vector operations")
    features_sub = features.add_subparsers(dest="features_command", required=True)
    f_extract = features_sub.add_parser("extract", help="extract feature vectors to a dump file")
    f_extract.add_argument("paths", nargs="*", help="files to extract from")
    f_extract.add_argument("--manifest", help="corpus manifest; extracts from every entry")
    f_extract.add_argument("--scheme", choices=_SCHEMES, required=True)
    f_extract.add_argument(
        "--fragments",
        type=_non_negative_int,
        default=0,
        help="fragments per file; 0 extracts one whole-file vector",
    )
    f_extract.add_argument("--fragment-bytes", type=_positive_int, default=None)
    f_extract.add_argument("--out", required=True, help="dump file to write")
    f_extract.add_argument("--format", choices=["binary", "text"], default="binary")
    _add_common(f_extract)

    sizes = commands.add_parser("sizes", help="dictionary size selection")
    sizes_sub = sizes.add_subparsers(dest="sizes_command", required=True)
    s_search = sizes_sub.add_parser("search", help="pairwise error matrices and size choice")
    s_search.add_argument("--manifest", required=True)
    s_search.add_argument("--scheme", choices=_SCHEMES, required=True)
    s_search.add_argument("--mode", choices=[MODE_FILE, MODE_FRAGMENTS], default=MODE_FRAGMENTS)
    s_search.add_argument("--k-grid", default=None, help="comma-separated candidate sizes")
    s_search.add_argument("--train-fragment-bytes", type=_positive_int, default=TRAIN_FRAGMENT_BYTES)
    s_search.add_argument("--fragments-per-file", type=_positive_int, default=1)
    s_search.add_argument("--l-extra", type=_non_negative_int, default=DEFAULT_OVERSAMPLING)
    s_search.add_argument("--out", required=True, help="directory for matrices and assignment")
    _add_common(s_search, workers=True)

    train_p = commands.add_parser("train", help="train a dictionary bundle from a manifest")
    train_p.add_argument("--manifest", required=True)
    train_p.add_argument("--scheme", choices=_SCHEMES, required=True)
    train_p.add_argument("--mode", choices=[MODE_FILE, MODE_FRAGMENTS], default=MODE_FRAGMENTS)
    train_p.add_argument("--k", default="auto", help="'auto', one size, or label=size pairs")
    train_p.add_argument("--k-grid", default=None, help="candidate sizes for --k auto")
    train_p.add_argument("--l-extra", type=_non_negative_int, default=DEFAULT_OVERSAMPLING)
    train_p.add_argument("--train-fragment-bytes", type=_positive_int, default=TRAIN_FRAGMENT_BYTES)
    train_p.add_argument("--fragments-per-file", type=_positive_int, default=1)
    train_p.add_argument("--out", required=True, help="bundle file to write")
    _add_common(train_p, workers=True)

    classify = commands.add_parser("classify", help="classify a manifest split with a bundle")
    classify.add_argument("--manifest", required=True)
    classify.add_argument("--bundle", required=True)
    classify.add_argument("--mode", choices=[MODE_FILE, MODE_FRAGMENTS], default=MODE_FRAGMENTS)
    classify.add_argument("--split", choices=["train", "test"], default="test")
    classify.add_argument("--fragments", type=_positive_int, default=DEFAULT_FRAGMENT_COUNT)
    classify.add_argument("--fragment-bytes", type=_positive_int, default=None,
                          help="fragment length; defaults per scheme")
    classify.add_argument("--out", default=None, help="directory for confusion matrix and reports")
    _add_common(classify, workers=True)

    scan = commands.add_parser("scan", help="flag files carrying embedded payload content")
    scan.add_argument("paths", nargs="*", help="files to scan")
    scan.add_argument("--manifest", help="scan every file of a corpus manifest instead")
    scan.add_argument("--bundle", required=True)
    scan.add_argument("--payload-label", required=True, help="dictionary label to count")
    scan.add_argument("--threshold", type=_non_negative_int, default=SCAN_THRESHOLD,
                      help="flag when strictly more fragments hit the payload label")
    scan.add_argument("--fragments", type=_non_negative_int, default=0,
                      help="sampled fragments per file; 0 scans every window")
    scan.add_argument("--fragment-bytes", type=_positive_int, default=SCAN_WINDOW_BYTES)
    scan.add_argument("--out", default=None, help="JSON report path")
    _add_common(scan, workers=True)

    bench = commands.add_parser("bench", help="time training and classification")
    bench.add_argument("--shape", action="append", required=True,
                       help="training matrix shape as ROWSxCOLS; repeatable")
    bench.add_argument("--k", required=True, help="comma-separated ranks")
    bench.add_argument("--repeats", type=_positive_int, default=1)
    bench.add_argument("--out", default=None, help="JSON output path")
    _add_common(bench)

    return parser


def _write_json(path, document):
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _cmd_synth(args):
    if args.classes < 2:
        raise ValidationError("--classes must be at least 2")
    labels = None
    if args.labels is not None:
        labels = tuple(token.strip() for token in args.labels.split(",") if token.strip())
    spec = SyntheticSourceSpec(
        class_seeds=tuple(derive_seed(args.seed, "class", i) for i in range(args.classes)),
        files_per_class=args.files_per_class,
        bytes_per_file=args.bytes,
        labels=labels,
    )
    manifest = synthesize_corpus(spec, args.out, seed=args.seed)
    print(f"wrote {len(manifest.entries)} files across {len(manifest.labels)} classes to {args.out}")
    return 0


def _collect_extract_inputs(args):
    if args.manifest:
        manifest = CorpusManifest.load(args.manifest)
        return [(str(manifest.absolute(e)), e.path) for e in manifest.entries]
    if not args.paths:
        raise ValidationError("give file paths or --manifest")
    return [(p, p) for p in args.paths]


def _cmd_features_extract(args):
    inputs = _collect_extract_inputs(args)
    records = []
    for path, name in inputs:
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise ValidationError(f"cannot read {path}: {exc}") from exc
        if args.fragments == 0:
            records.append(FeatureRecord(args.scheme, name, 0, extract(args.scheme, data)))
            continue
        length = args.fragment_bytes
        if length is None:
            length = DEFAULT_FRAGMENT_BYTES[args.scheme]
        spec = FragmentSpec(
            count=args.fragments, length=length, seed=file_fragment_seed(args.seed, name)
        )
        offsets = sample_offsets(len(data), spec)
        for offset, fragment in zip(offsets, sample_fragments(data, spec)):
            records.append(
                FeatureRecord(args.scheme, name, int(offset), extract(args.scheme, fragment))
            )
    write_feature_records(args.out, records, form=args.format)
    print(f"wrote {len(records)} feature records to {args.out}")
    return 0


def _cmd_sizes_search(args):
    manifest = CorpusManifest.load(args.manifest)
    classes = training_matrices(
        manifest,
        args.scheme,
        args.mode,
        seed=args.seed,
        train_fragment_bytes=args.train_fragment_bytes,
        fragments_per_file=args.fragments_per_file,
        workers=args.workers,
    )
    if len(classes) < 2:
        raise ValidationError("need at least two classes in the manifest")
    grid = (
        tuple(parse_int_list(args.k_grid, "--k-grid"))
        if args.k_grid is not None
        else default_k_range(classes)
    )
    matrices = all_pairwise_error_matrices(classes, grid, args.seed, args.l_extra)
    assignment = find_optimal_agreement(matrices.values())
    holdout = evaluate_assignment(classes, assignment.sizes, args.seed, args.l_extra)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for (left, right), matrix in sorted(matrices.items()):
        stem = f"errors_{left}_vs_{right}"
        (out_dir / f"{stem}.csv").write_text(error_matrix_to_csv(matrix), encoding="utf-8")
        (out_dir / f"{stem}.json").write_text(error_matrix_to_json(matrix), encoding="utf-8")
    _write_json(
        out_dir / "assignment.json",
        {
            "grid": list(grid),
            "sizes": assignment.sizes,
            "pairwise_total_error": assignment.total_error,
            "holdout_error": holdout,
            "seed": args.seed,
            "scheme": args.scheme,
        },
    )
    chosen = ", ".join(f"{label}={size}" for label, size in sorted(assignment.sizes.items()))
    print(f"grid: {list(grid)}")
    print(f"chosen sizes: {chosen}")
    print(f"pairwise total error: {assignment.total_error} (holdout error {holdout})")
    print(f"wrote matrices and assignment to {out_dir}")
    return 0


def _cmd_train(args):
    manifest = CorpusManifest.load(args.manifest)
    policy = parse_size_policy(args.k)
    k_grid = parse_int_list(args.k_grid, "--k-grid") if args.k_grid is not None else None
    outcome = train_from_manifest(
        manifest,
        args.scheme,
        args.mode,
        k=policy,
        seed=args.seed,
        k_grid=k_grid,
        oversampling=args.l_extra,
        train_fragment_bytes=args.train_fragment_bytes,
        fragments_per_file=args.fragments_per_file,
        workers=args.workers,
    )
    save_bundle(args.out, outcome.dictionaries)
    sizes = ", ".join(f"{label}={size}" for label, size in sorted(outcome.sizes.items()))
    print(f"trained {len(outcome.dictionaries)} dictionaries ({sizes})")
    if outcome.assignment is not None:
        print(
            f"auto sizing: pairwise total error {outcome.assignment.total_error}, "
            f"holdout error {outcome.holdout_error}"
        )
    print(f"wrote bundle to {args.out}")
    return 0


def _cmd_classify(args):
    manifest = CorpusManifest.load(args.manifest)
    dictionaries = load_bundle(args.bundle)
    confusion, outcomes = classify_from_manifest(
        manifest,
        dictionaries,
        args.mode,
        seed=args.seed,
        fragment_count=args.fragments,
        fragment_bytes=args.fragment_bytes,
        split=args.split,
        workers=args.workers,
    )
    print(confusion.to_csv(), end="")
    print(f"accuracy: {confusion.accuracy:.4f} over {confusion.total} files")
    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "confusion.csv").write_text(confusion.to_csv(), encoding="utf-8")
        _write_json(out_dir / "confusion.json", confusion.to_json_dict())
        with open(out_dir / "files.jsonl", "w", encoding="utf-8") as handle:
            for outcome in outcomes:
                handle.write(
                    json.dumps(
                        {
                            "path": outcome.path,
                            "actual": outcome.actual,
                            "predicted": outcome.predicted,
                            "margin": outcome.margin,
                            "distances": outcome.distances,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
        print(f"wrote reports to {out_dir}")
    return 0


def _cmd_scan(args):
    dictionaries = load_bundle(args.bundle)
    root = None
    if args.manifest:
        manifest = CorpusManifest.load(args.manifest)
        paths = [manifest.absolute(e) for e in manifest.entries]
        root = Path(manifest.root)
    elif args.paths:
        paths = args.paths
    else:
        raise ValidationError("give file paths or --manifest")
    outcomes = scan_paths(
        paths,
        dictionaries,
        args.payload_label,
        threshold=args.threshold,
        fragment_bytes=args.fragment_bytes,
        fragment_count=args.fragments,
        seed=args.seed,
        workers=args.workers,
        root=root,
    )
    flagged = sum(1 for o in outcomes if o.flagged)
    for outcome in outcomes:
        marker = "FLAGGED" if outcome.flagged else "clean"
        print(
            f"{marker:8s} {outcome.path} "
            f"({outcome.payload_fragments}/{outcome.total_fragments} payload fragments)"
        )
    print(f"flagged {flagged} of {len(outcomes)} files (threshold {args.threshold})")
    if args.out is not None:
        _write_json(
            args.out,
            {
                "payload_label": args.payload_label,
                "threshold": args.threshold,
                "fragment_bytes": args.fragment_bytes,
                "fragments": args.fragments,
                "flagged_count": flagged,
                "files": [
                    {
                        "path": o.path,
                        "flagged": o.flagged,
                        "payload_fragments": o.payload_fragments,
                        "total_fragments": o.total_fragments,
                    }
                    for o in outcomes
                ],
            },
        )
        print(f"wrote report to {args.out}")
    return 0


def _cmd_bench(args):
    shapes = [parse_shape(text) for text in args.shape]
    ranks = parse_int_list(args.k, "--k")
    rows = run_benchmarks(shapes, ranks, seed=args.seed, repeats=args.repeats)
    header = f"{'shape':>14s} {'rank':>6s} {'train s':>10s} {'train s/MB':>12s} {'classify s':>12s}"
    print(header)
    for row in rows:
        print(
            f"{row['rows']:>7d}x{row['cols']:<6d} {row['rank']:>6d} "
            f"{row['train_seconds']:>10.4f} {row['train_seconds_per_mb']:>12.4f} "
            f"{row['classify_seconds_per_signal']:>12.6f}"
        )
    if args.out is not None:
        _write_json(args.out, {"results": rows})
        print(f"wrote timings to {args.out}")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "classify": _cmd_classify,
    "scan": _cmd_scan,
    "bench": _cmd_bench,
}


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "features":
        return _cmd_features_extract(args)
    if args.command == "sizes":
        return _cmd_sizes_search(args)
    return _HANDLERS[args.command](args)


def main(argv=None):
    warnings.simplefilter("default")
    try:
        return run(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RludictError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Manifest-driven pipeline helpers and the command-line interface."""

import json
from pathlib import Path

import numpy as np
import pytest

from rludict.bundle import load_bundle, save_bundle
from rludict.cli import main, run
from rludict.corpus import SyntheticSourceSpec, plant_payload, synthesize_corpus
from rludict.errors import ShortInputWarning, ValidationError
from rludict.features import read_feature_records
from rludict.pipeline import (
    MODE_FILE,
    MODE_FRAGMENTS,
    ConfusionMatrix,
    classify_from_manifest,
    resolve_sizes,
    run_benchmarks,
    scan_paths,
    train_from_manifest,
    training_matrices,
)

LABELS = ("apple", "berry", "citrus")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    spec = SyntheticSourceSpec(
        class_seeds=(11, 22, 33), files_per_class=10, bytes_per_file=8192, labels=LABELS
    )
    return synthesize_corpus(spec, root, seed=7)


@pytest.fixture(scope="module")
def trained(corpus):
    return train_from_manifest(
        corpus,
        "bfd-cdd",
        MODE_FRAGMENTS,
        k=3,
        seed=7,
        train_fragment_bytes=4000,
        fragments_per_file=2,
    )


@pytest.fixture(scope="module")
def scan_setup(corpus, trained, tmp_path_factory):
    scandir = tmp_path_factory.mktemp("scan")
    host = (Path(corpus.root) / corpus.select(label="apple")[0].path).read_bytes()
    payload = (Path(corpus.root) / corpus.select(label="berry")[0].path).read_bytes()
    planted, _ = plant_payload(host, payload * 2, segments=3, segment_bytes=3000, seed=5)
    (scandir / "dirty.bin").write_bytes(planted.tobytes())
    (scandir / "clean.bin").write_bytes(host)
    return scandir


@pytest.fixture(scope="module")
def bundle_path(corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("bundles") / "dicts.rlub"
    rc = run(
        [
            "train",
            "--manifest",
            str(Path(corpus.root) / "manifest.json"),
            "--scheme",
            "bfd-cdd",
            "--mode",
            "fragments",
            "--k",
            "3",
            "--train-fragment-bytes",
            "4000",
            "--fragments-per-file",
            "2",
            "--out",
            str(path),
            "--seed",
            "7",
        ]
    )
    assert rc == 0
    return path


class TestConfusionMatrix:
    def build(self):
        pairs = [("a", "a"), ("a", "b"), ("b", "b"), ("b", "b")]
        return ConfusionMatrix.from_pairs(pairs)

    def test_rows_are_predictions_columns_are_truth(self):
        confusion = self.build()
        assert confusion.labels == ("a", "b")
        assert np.array_equal(confusion.counts, [[1, 0], [1, 2]])
        assert confusion.column_totals == {"a": 2, "b": 2}

    def test_accuracies(self):
        confusion = self.build()
        assert confusion.accuracy == 0.75
        assert confusion.class_accuracy("a") == 0.5
        assert confusion.class_accuracy("b") == 1.0
        assert confusion.total == 4

    def test_csv_layout(self):
        lines = self.build().to_csv().strip().split("\n")
        assert lines == ["predicted\\actual,a,b", "a,1,0", "b,1,2"]

    def test_json_document(self):
        document = self.build().to_json_dict()
        assert document["labels"] == ["a", "b"]
        assert document["counts"] == [[1, 0], [1, 2]]
        assert document["accuracy"] == 0.75
        assert document["per_class_accuracy"] == {"a": 0.5, "b": 1.0}

    def test_label_seen_only_as_prediction_has_no_accuracy(self):
        confusion = ConfusionMatrix.from_pairs([("a", "b"), ("a", "a")])
        assert confusion.column_totals == {"a": 2, "b": 0}
        with pytest.raises(ValidationError):
            confusion.class_accuracy("b")
        assert "b" not in confusion.to_json_dict()["per_class_accuracy"]

    def test_empty_pairs_rejected(self):
        with pytest.raises(ValidationError):
            ConfusionMatrix.from_pairs([])


class TestTrainingMatrices:
    def test_file_mode_one_column_per_training_file(self, corpus):
        classes = training_matrices(corpus, "bfd-cdd", MODE_FILE, seed=7)
        assert sorted(classes) == list(LABELS)
        for label in LABELS:
            assert classes[label].shape == (512, 8)

    def test_fragment_mode_multiplies_columns(self, corpus):
        classes = training_matrices(
            corpus,
            "bfd-cdd",
            MODE_FRAGMENTS,
            seed=7,
            train_fragment_bytes=2000,
            fragments_per_file=3,
        )
        for label in LABELS:
            assert classes[label].shape == (512, 24)

    def test_whole_file_mode_needs_compact_features(self, corpus):
        for scheme in ("dbfd", "mw"):
            with pytest.raises(ValidationError):
                training_matrices(corpus, scheme, MODE_FILE, seed=7)

    def test_unknown_mode_rejected(self, corpus):
        with pytest.raises(ValidationError):
            training_matrices(corpus, "bfd-cdd", "chunks", seed=7)

    def test_deterministic(self, corpus):
        kwargs = dict(seed=7, train_fragment_bytes=2000)
        first = training_matrices(corpus, "bfd-cdd", MODE_FRAGMENTS, **kwargs)
        second = training_matrices(corpus, "bfd-cdd", MODE_FRAGMENTS, **kwargs)
        for label in LABELS:
            assert first[label].tobytes() == second[label].tobytes()

    def test_short_files_degrade_to_whole_file_with_warning(self, corpus):
        with pytest.warns(ShortInputWarning):
            classes = training_matrices(
                corpus, "bfd-cdd", MODE_FRAGMENTS, seed=7, train_fragment_bytes=10000
            )
        for label in LABELS:
            assert classes[label].shape == (512, 8)


class TestResolveSizes:
    def classes(self):
        rng = np.random.default_rng(140)
        return {"a": rng.normal(size=(20, 30)), "b": rng.normal(size=(20, 30))}

    def test_single_int_applies_everywhere(self):
        sizes, assignment, matrices = resolve_sizes(self.classes(), 4)
        assert sizes == {"a": 4, "b": 4}
        assert assignment is None and matrices is None

    def test_mapping_passes_through(self):
        sizes, _, _ = resolve_sizes(self.classes(), {"a": 2, "b": 5})
        assert sizes == {"a": 2, "b": 5}
        with pytest.raises(ValidationError):
            resolve_sizes(self.classes(), {"a": 2})

    def test_auto_searches_the_grid(self):
        sizes, assignment, matrices = resolve_sizes(self.classes(), "auto", k_grid=(2, 4))
        assert assignment is not None
        assert set(matrices) == {("a", "b")}
        assert all(size in (2, 4) for size in sizes.values())

    def test_bad_policies_rejected(self):
        for policy in ("biggest", 0, -3, 2.5, True):
            with pytest.raises(ValidationError):
                resolve_sizes(self.classes(), policy)


class TestManifestTrainClassify:
    def test_fixed_size_training(self, trained):
        assert sorted(trained.dictionaries) == list(LABELS)
        assert trained.sizes == {label: 3 for label in LABELS}
        assert trained.assignment is None and trained.holdout_error is None
        for label in LABELS:
            assert trained.dictionaries[label].scheme == "bfd-cdd"
            assert trained.dictionaries[label].dim == 512

    def test_auto_training_reports_search_results(self, corpus):
        outcome = train_from_manifest(
            corpus,
            "bfd-cdd",
            MODE_FRAGMENTS,
            k="auto",
            k_grid=(2, 3),
            seed=7,
            train_fragment_bytes=4000,
            fragments_per_file=2,
        )
        assert outcome.assignment is not None
        assert outcome.holdout_error is not None
        assert len(outcome.error_matrices) == 3

    def test_classification_is_clean_and_accounted(self, corpus, trained):
        confusion, files = classify_from_manifest(
            corpus,
            trained.dictionaries,
            MODE_FRAGMENTS,
            seed=7,
            fragment_count=4,
            fragment_bytes=1500,
        )
        assert confusion.accuracy == 1.0
        assert confusion.column_totals == {label: 2 for label in LABELS}
        assert len(files) == 6
        for outcome in files:
            assert outcome.actual == outcome.predicted
            assert outcome.margin > 0.0
            assert sorted(outcome.distances) == list(LABELS)

    def test_train_split_classification(self, corpus, trained):
        confusion, files = classify_from_manifest(
            corpus,
            trained.dictionaries,
            MODE_FRAGMENTS,
            seed=7,
            fragment_count=2,
            fragment_bytes=1500,
            split="train",
        )
        assert confusion.column_totals == {label: 8 for label in LABELS}

    def test_repeat_run_is_bit_identical(self, corpus, trained):
        kwargs = dict(seed=7, fragment_count=4, fragment_bytes=1500)
        first, _ = classify_from_manifest(
            corpus, trained.dictionaries, MODE_FRAGMENTS, **kwargs
        )
        second, _ = classify_from_manifest(
            corpus, trained.dictionaries, MODE_FRAGMENTS, **kwargs
        )
        assert np.array_equal(first.counts, second.counts)

    def test_worker_threads_do_not_change_results(self, corpus, trained):
        kwargs = dict(seed=7, fragment_count=4, fragment_bytes=1500)
        serial, _ = classify_from_manifest(
            corpus, trained.dictionaries, MODE_FRAGMENTS, workers=1, **kwargs
        )
        threaded, _ = classify_from_manifest(
            corpus, trained.dictionaries, MODE_FRAGMENTS, workers=3, **kwargs
        )
        assert np.array_equal(serial.counts, threaded.counts)


class TestScanPaths:
    def test_planted_file_is_flagged_clean_file_is_not(self, trained, scan_setup):
        outcomes = scan_paths(
            [scan_setup / "dirty.bin", scan_setup / "clean.bin"],
            trained.dictionaries,
            "berry",
            threshold=2,
            fragment_bytes=1000,
            root=scan_setup,
        )
        by_name = {o.path: o for o in outcomes}
        assert by_name["dirty.bin"].flagged
        assert by_name["dirty.bin"].payload_fragments > 2
        assert not by_name["clean.bin"].flagged

    def test_exhaustive_windows_cover_the_whole_file(self, trained, scan_setup):
        outcomes = scan_paths(
            [scan_setup / "clean.bin"],
            trained.dictionaries,
            "berry",
            threshold=2,
            fragment_bytes=1000,
        )
        assert outcomes[0].total_fragments == 8192 // 1000

    def test_sampled_windows_use_the_requested_count(self, trained, scan_setup):
        outcomes = scan_paths(
            [scan_setup / "clean.bin"],
            trained.dictionaries,
            "berry",
            threshold=2,
            fragment_bytes=1000,
            fragment_count=5,
            seed=3,
        )
        assert outcomes[0].total_fragments == 5

    def test_validation(self, trained):
        with pytest.raises(ValidationError):
            scan_paths([], trained.dictionaries, "berry")


class TestBenchmarks:
    def test_smoke(self):
        rows = run_benchmarks([(60, 40)], [4], seed=1, repeats=1)
        assert len(rows) == 1
        row = rows[0]
        assert row["rows"] == 60 and row["cols"] == 40 and row["rank"] == 4
        assert row["train_seconds"] > 0.0
        assert row["classify_seconds_per_signal"] > 0.0


class TestCliSynth:
    def test_writes_a_loadable_corpus(self, tmp_path, capsys):
        out = tmp_path / "corpus"
        rc = run(
            [
                "synth",
                "--out",
                str(out),
                "--classes",
                "2",
                "--files-per-class",
                "6",
                "--bytes",
                "2048",
                "--seed",
                "3",
            ]
        )
        assert rc == 0
        assert "wrote 12 files across 2 classes" in capsys.readouterr().out
        assert (out / "manifest.json").is_file()

    def test_rerun_is_byte_identical(self, tmp_path):
        args = ["--classes", "2", "--files-per-class", "4", "--bytes", "1024", "--seed", "9"]
        run(["synth", "--out", str(tmp_path / "one")] + args)
        run(["synth", "--out", str(tmp_path / "two")] + args)
        files = sorted(p.relative_to(tmp_path / "one") for p in (tmp_path / "one").rglob("*.bin"))
        assert files
        for rel in files:
            assert (tmp_path / "one" / rel).read_bytes() == (tmp_path / "two" / rel).read_bytes()

    def test_custom_labels(self, tmp_path):
        run(
            [
                "synth",
                "--out",
                str(tmp_path / "c"),
                "--classes",
                "2",
                "--files-per-class",
                "2",
                "--bytes",
                "1024",
                "--labels",
                "pdf,jpg",
            ]
        )
        document = json.loads((tmp_path / "c" / "manifest.json").read_text())
        assert {entry["label"] for entry in document["entries"]} == {"pdf", "jpg"}

    def test_bad_arguments_exit_2(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path / "x"), "--classes", "1"]) == 2
        assert (
            main(
                [
                    "synth",
                    "--out",
                    str(tmp_path / "y"),
                    "--classes",
                    "2",
                    "--files-per-class",
                    "2",
                    "--bytes",
                    "1024",
                    "--labels",
                    "twin,twin",
                ]
            )
            == 2
        )
        assert "error:" in capsys.readouterr().err


class TestCliFeatures:
    def test_extract_whole_files_binary(self, corpus, tmp_path, capsys):
        out = tmp_path / "dump.rluf"
        first = Path(corpus.root) / corpus.entries[0].path
        second = Path(corpus.root) / corpus.entries[1].path
        rc = run(
            ["features", "extract", str(first), str(second), "--scheme", "bfd-cdd", "--out", str(out)]
        )
        assert rc == 0
        assert "wrote 2 feature records" in capsys.readouterr().out
        records = read_feature_records(out)
        assert len(records) == 2
        assert all(r.scheme == "bfd-cdd" and r.offset == 0 for r in records)

    def test_extract_fragments_from_manifest_text(self, corpus, tmp_path):
        out = tmp_path / "dump.txt"
        rc = run(
            [
                "features",
                "extract",
                "--manifest",
                str(Path(corpus.root) / "manifest.json"),
                "--scheme",
                "bfd-cdd",
                "--fragments",
                "2",
                "--fragment-bytes",
                "1000",
                "--format",
                "text",
                "--out",
                str(out),
                "--seed",
                "5",
            ]
        )
        assert rc == 0
        records = read_feature_records(out)
        assert len(records) == 2 * len(corpus.entries)
        sources = {r.source for r in records}
        assert corpus.entries[0].path in sources

    def test_missing_input_exits_2(self, tmp_path):
        rc = main(
            [
                "features",
                "extract",
                str(tmp_path / "absent.bin"),
                "--scheme",
                "bfd-cdd",
                "--out",
                str(tmp_path / "dump"),
            ]
        )
        assert rc == 2

    def test_no_inputs_exits_2(self, tmp_path):
        rc = main(["features", "extract", "--scheme", "mw", "--out", str(tmp_path / "d")])
        assert rc == 2


class TestCliTrainClassify:
    def test_train_writes_a_loadable_bundle(self, bundle_path, trained):
        loaded = load_bundle(bundle_path)
        assert sorted(loaded) == list(LABELS)
        for label in LABELS:
            assert (
                loaded[label].basis.tobytes() == trained.dictionaries[label].basis.tobytes()
            )

    def test_train_per_class_sizes(self, corpus, tmp_path, capsys):
        path = tmp_path / "mixed.rlub"
        rc = run(
            [
                "train",
                "--manifest",
                str(Path(corpus.root) / "manifest.json"),
                "--scheme",
                "bfd-cdd",
                "--k",
                "apple=2,berry=3,citrus=2",
                "--train-fragment-bytes",
                "4000",
                "--out",
                str(path),
                "--seed",
                "7",
            ]
        )
        assert rc == 0
        assert "trained 3 dictionaries" in capsys.readouterr().out
        loaded = load_bundle(path)
        assert loaded["apple"].rank == 2
        assert loaded["berry"].rank == 3

    def test_classify_prints_and_writes_reports(self, corpus, bundle_path, tmp_path, capsys):
        out_dir = tmp_path / "report"
        argv = [
            "classify",
            "--manifest",
            str(Path(corpus.root) / "manifest.json"),
            "--bundle",
            str(bundle_path),
            "--fragments",
            "4",
            "--fragment-bytes",
            "1500",
            "--seed",
            "7",
            "--out",
            str(out_dir),
        ]
        assert run(argv) == 0
        stdout = capsys.readouterr().out
        assert stdout.startswith("predicted\\actual,apple,berry,citrus")
        assert "accuracy: 1.0000 over 6 files" in stdout
        document = json.loads((out_dir / "confusion.json").read_text())
        assert document["accuracy"] == 1.0
        csv_text = (out_dir / "confusion.csv").read_text()
        assert csv_text.startswith("predicted\\actual")
        lines = (out_dir / "files.jsonl").read_text().strip().split("\n")
        assert len(lines) == 6
        record = json.loads(lines[0])
        assert {"path", "actual", "predicted", "margin", "distances"} <= set(record)

    def test_classify_rerun_matches_bit_for_bit(self, corpus, bundle_path, tmp_path):
        argv = lambda out: [
            "classify",
            "--manifest",
            str(Path(corpus.root) / "manifest.json"),
            "--bundle",
            str(bundle_path),
            "--fragments",
            "4",
            "--fragment-bytes",
            "1500",
            "--seed",
            "7",
            "--out",
            str(out),
        ]
        assert run(argv(tmp_path / "first")) == 0
        assert run(argv(tmp_path / "second")) == 0
        assert (tmp_path / "first" / "confusion.csv").read_bytes() == (
            tmp_path / "second" / "confusion.csv"
        ).read_bytes()
        assert (tmp_path / "first" / "files.jsonl").read_bytes() == (
            tmp_path / "second" / "files.jsonl"
        ).read_bytes()

    def test_corrupt_bundle_is_malformed_input(self, corpus, tmp_path):
        bad = tmp_path / "bad.rlub"
        bad.write_bytes(b"RLUB garbage that is not a bundle")
        rc = main(
            [
                "classify",
                "--manifest",
                str(Path(corpus.root) / "manifest.json"),
                "--bundle",
                str(bad),
            ]
        )
        assert rc == 2

    def test_missing_manifest_is_malformed_input(self, bundle_path, tmp_path):
        rc = main(
            [
                "classify",
                "--manifest",
                str(tmp_path / "nowhere" / "manifest.json"),
                "--bundle",
                str(bundle_path),
            ]
        )
        assert rc == 2

    def test_degenerate_class_fails_with_exit_3(self, tmp_path):
        # Constant files give bitwise-identical feature columns, so
        # elimination cancels exactly and training cannot reach rank 2.
        # That is a computation failure on well-formed input.
        root = tmp_path / "degenerate"
        rng = np.random.default_rng(141)
        entries = []
        for label, content in (
            ("zeros", lambda i: bytes(4096)),
            ("noise", lambda i: bytes(rng.integers(0, 256, size=4096, dtype=np.uint8))),
        ):
            (root / label).mkdir(parents=True)
            for i in range(3):
                name = f"{label}/f{i}.bin"
                (root / name).write_bytes(content(i))
                split = "train" if i < 2 else "test"
                entries.append({"path": name, "label": label, "split": split})
        (root / "manifest.json").write_text(
            json.dumps({"format_version": 1, "entries": entries}), encoding="utf-8"
        )
        rc = main(
            [
                "train",
                "--manifest",
                str(root),
                "--scheme",
                "bfd-cdd",
                "--k",
                "2",
                "--train-fragment-bytes",
                "2000",
                "--out",
                str(tmp_path / "doomed.rlub"),
            ]
        )
        assert rc == 3


class TestCliSizes:
    def test_search_writes_matrices_and_assignment(self, corpus, tmp_path, capsys):
        out_dir = tmp_path / "sizes"
        rc = run(
            [
                "sizes",
                "search",
                "--manifest",
                str(Path(corpus.root) / "manifest.json"),
                "--scheme",
                "bfd-cdd",
                "--k-grid",
                "2,3",
                "--train-fragment-bytes",
                "4000",
                "--fragments-per-file",
                "2",
                "--out",
                str(out_dir),
                "--seed",
                "7",
            ]
        )
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "grid: [2, 3]" in stdout
        assert "chosen sizes:" in stdout
        names = {p.name for p in out_dir.iterdir()}
        assert "assignment.json" in names
        assert "errors_apple_vs_berry.csv" in names
        assert "errors_apple_vs_berry.json" in names
        assert "errors_berry_vs_citrus.csv" in names
        document = json.loads((out_dir / "assignment.json").read_text())
        assert document["grid"] == [2, 3]
        assert set(document["sizes"]) == set(LABELS)
        assert {"pairwise_total_error", "holdout_error", "seed", "scheme"} <= set(document)


class TestCliScan:
    def test_scan_flags_planted_files(self, corpus, tmp_path, capsys):
        bundle = tmp_path / "dicts.rlub"
        run(
            [
                "train",
                "--manifest",
                str(Path(corpus.root) / "manifest.json"),
                "--scheme",
                "bfd-cdd",
                "--k",
                "3",
                "--train-fragment-bytes",
                "4000",
                "--fragments-per-file",
                "2",
                "--out",
                str(bundle),
                "--seed",
                "7",
            ]
        )
        capsys.readouterr()
        host = (Path(corpus.root) / corpus.select(label="apple")[0].path).read_bytes()
        payload = (Path(corpus.root) / corpus.select(label="berry")[0].path).read_bytes()
        planted, _ = plant_payload(host, payload * 2, segments=3, segment_bytes=3000, seed=5)
        dirty = tmp_path / "dirty.bin"
        clean = tmp_path / "clean.bin"
        dirty.write_bytes(planted.tobytes())
        clean.write_bytes(host)
        report = tmp_path / "scan.json"
        rc = run(
            [
                "scan",
                str(dirty),
                str(clean),
                "--bundle",
                str(bundle),
                "--payload-label",
                "berry",
                "--threshold",
                "2",
                "--fragment-bytes",
                "1000",
                "--out",
                str(report),
            ]
        )
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "FLAGGED" in stdout and "clean" in stdout
        assert "flagged 1 of 2 files (threshold 2)" in stdout
        document = json.loads(report.read_text())
        assert document["flagged_count"] == 1
        flagged = {f["path"]: f["flagged"] for f in document["files"]}
        assert flagged[str(dirty)] is True
        assert flagged[str(clean)] is False

    def test_unknown_payload_label_exits_2(self, corpus, tmp_path):
        bundle = tmp_path / "dicts.rlub"
        run(
            [
                "train",
                "--manifest",
                str(Path(corpus.root) / "manifest.json"),
                "--scheme",
                "bfd-cdd",
                "--k",
                "2",
                "--train-fragment-bytes",
                "4000",
                "--out",
                str(bundle),
            ]
        )
        target = tmp_path / "file.bin"
        target.write_bytes(bytes(6000))
        rc = main(
            ["scan", str(target), "--bundle", str(bundle), "--payload-label", "nothere"]
        )
        assert rc == 2


class TestCliBench:
    def test_smoke(self, tmp_path, capsys):
        out = tmp_path / "bench.json"
        rc = run(["bench", "--shape", "60x40", "--k", "4", "--out", str(out)])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "train s" in stdout
        document = json.loads(out.read_text())
        assert document["results"][0]["rank"] == 4

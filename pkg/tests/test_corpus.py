"""Preprocessing, Tukey filtering, histogram and corpus assembly tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logtriage.corpus import (
    LogRecord,
    PpuConfig,
    build_training_corpus,
    preprocess_log,
    preprocess_records,
    read_manifest,
    scan_corpus,
    size_histogram,
    tukey_filter,
    write_manifest,
)


def quantile_oracle(sizes, q):
    """Reference interpolated quantile: sort, h = (n-1)q, linear between neighbours."""
    s = sorted(sizes)
    h = (len(s) - 1) * q
    lo = int(h)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def rec(i, text, label=None):
    return LogRecord(id=f"r{i:04d}", text=text, byte_size=len(text.encode()), label=label)


class TestPreprocess:
    def test_benign_line_unchanged(self):
        assert preprocess_log("I: CELL OK\n", PpuConfig()) == "I: CELL OK\n"

    def test_long_word_dropped(self):
        cfg = PpuConfig(max_word_len=10, max_line_len=100)
        assert preprocess_log("x ABCDEFGHIJK y", cfg) == "x y"

    def test_standalone_number_dropped(self):
        assert preprocess_log("count 12345 done", PpuConfig()) == "count done"

    def test_signed_number_dropped_attached_kept(self):
        cfg = PpuConfig()
        assert preprocess_log("rsrp -101 dbm", cfg) == "rsrp dbm"
        assert preprocess_log("rsrp=-101 dbm", cfg) == "rsrp=-101 dbm"

    def test_numbers_kept_when_disabled(self):
        cfg = PpuConfig(strip_numbers=False)
        assert preprocess_log("count 12345 done", cfg) == "count 12345 done"

    def test_long_line_dropped_whole(self):
        cfg = PpuConfig(max_word_len=10, max_line_len=20)
        text = "short line\n" + "x " * 30 + "\nalso short"
        assert preprocess_log(text, cfg) == "short line\nalso short"

    def test_empty_input(self):
        assert preprocess_log("", PpuConfig()) == ""

    @settings(max_examples=200, deadline=None)
    @given(st.text(alphabet=st.characters(codec="utf-8"), max_size=300))
    def test_idempotent(self, text):
        cfg = PpuConfig(max_word_len=8, max_line_len=40)
        once = preprocess_log(text, cfg)
        assert preprocess_log(once, cfg) == once

    def test_never_grows(self):
        rng = np.random.default_rng(7)
        alphabet = list("ab 12\nXYZLONGWORD")
        cfg = PpuConfig(max_word_len=6, max_line_len=30)
        for _ in range(100):
            text = "".join(rng.choice(alphabet, size=rng.integers(0, 120)))
            assert len(preprocess_log(text, cfg)) <= len(text)


class TestTukey:
    def test_hand_example(self):
        sizes = [10, 12, 14, 16, 18, 20, 200]
        records = [rec(i, "x" * s) for i, s in enumerate(sizes)]
        report = tukey_filter(records)
        assert report.q1 == pytest.approx(13.0)
        assert report.q3 == pytest.approx(19.0)
        assert report.iqr == pytest.approx(6.0)
        assert report.lower_bound == pytest.approx(4.0)
        assert report.upper_bound == pytest.approx(28.0)
        assert report.dropped_ids == ["r0006"]
        assert len(report.kept_ids) == 6

    def test_all_equal_sizes_all_kept(self):
        records = [rec(i, "y" * 40) for i in range(5)]
        report = tukey_filter(records)
        assert report.iqr == 0.0
        assert report.lower_bound == report.upper_bound == 40.0
        assert not report.dropped_ids

    def test_hard_cap_applies_after_bounds(self):
        # in-bounds by char count but over the byte cap
        records = [rec(i, "z" * 1000) for i in range(4)]
        big = LogRecord(id="rbig", text="z" * 1000, byte_size=301_000)
        report = tukey_filter(records + [big], hard_cap_bytes=300_000)
        assert "rbig" in report.dropped_ids

    def test_empty_input_raises(self):
        with pytest.raises(ValueError):
            tukey_filter([])

    def test_against_quantile_oracle(self):
        rng = np.random.default_rng(42)
        for trial in range(200):
            n = int(rng.integers(1, 400))
            sizes = rng.integers(0, 10_000, size=n).tolist()
            records = [rec(i, "c" * s) for i, s in enumerate(sizes)]
            report = tukey_filter(records)
            q1 = quantile_oracle(sizes, 0.25)
            q3 = quantile_oracle(sizes, 0.75)
            assert report.q1 == pytest.approx(q1, abs=1e-9)
            assert report.q3 == pytest.approx(q3, abs=1e-9)
            lower, upper = q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)
            expect_kept = {
                r.id for r, s in zip(records, sizes) if lower <= s <= upper
            }
            assert set(report.kept_ids) == expect_kept

    def test_kept_set_matches_bound_predicate(self):
        rng = np.random.default_rng(3)
        sizes = rng.integers(0, 500, size=60)
        records = [rec(i, "q" * int(s)) for i, s in enumerate(sizes)]
        report = tukey_filter(records)
        for r in records:
            kept = report.lower_bound <= r.char_count <= report.upper_bound
            assert (r.id in report.kept_ids) == kept
        assert sorted(report.kept_ids + report.dropped_ids) == sorted(r.id for r in records)


class TestHistogram:
    def test_even_split(self):
        records = [rec(i, "x" * s) for i, s in enumerate([1, 2, 3, 4])]
        bins = size_histogram(records, 2)
        assert [c for _, _, c in bins] == [2, 2]

    def test_single_record(self):
        bins = size_histogram([rec(0, "xxxx")], 3)
        assert sum(c for _, _, c in bins) == 1
        assert sum(1 for _, _, c in bins if c > 0) == 1

    def test_single_bin_spans_range(self):
        records = [rec(0, ""), rec(1, "x" * 10)]
        bins = size_histogram(records, 1)
        assert bins[0][2] == 2

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.integers(min_value=0, max_value=300), min_size=1, max_size=50),
        st.integers(min_value=1, max_value=12),
    )
    def test_counts_sum_to_record_count(self, sizes, n_bins):
        records = [rec(i, "s" * s) for i, s in enumerate(sizes)]
        bins = size_histogram(records, n_bins)
        assert sum(c for _, _, c in bins) == len(records)

    def test_errors(self):
        with pytest.raises(ValueError):
            size_histogram([], 3)
        with pytest.raises(ValueError):
            size_histogram([rec(0, "x")], 0)


class TestCorpusBuild:
    def test_two_records(self):
        assert build_training_corpus([rec(0, "ab"), rec(1, "cd")]) == "ab\ncd"

    def test_single_record_identity(self):
        assert build_training_corpus([rec(0, "hello")]) == "hello"

    def test_length_includes_separators(self):
        records = [rec(i, "x" * 10) for i in range(3)]
        assert len(build_training_corpus(records)) == 32

    def test_id_order_not_input_order(self):
        out = build_training_corpus([rec(1, "b"), rec(0, "a")])
        assert out == "a\nb"


class TestScan:
    def test_scan_without_manifest(self, tmp_path):
        for name in ("c.log", "a.log", "b.log"):
            (tmp_path / name).write_text(f"content of {name}")
        records = scan_corpus(tmp_path)
        assert [r.id for r in records] == ["a.log", "b.log", "c.log"]
        assert all(r.label is None for r in records)

    def test_manifest_labels_attached(self, tmp_path):
        (tmp_path / "a.log").write_text("aaa")
        (tmp_path / "b.log").write_text("bbb")
        write_manifest(tmp_path / "manifest.csv", [("a.log", "Pass"), ("b.log", "L2")])
        records = scan_corpus(tmp_path / "", manifest=tmp_path / "manifest.csv")
        by_id = {r.id: r for r in records}
        assert by_id["a.log"].label == "Pass"
        assert by_id["b.log"].label == "L2"
        # the manifest itself is scanned as an unlabeled record
        assert by_id["manifest.csv"].label is None

    def test_invalid_label_names_offender(self, tmp_path):
        path = tmp_path / "manifest.csv"
        path.write_text("path,label\na.log,L9\n")
        with pytest.raises(ValueError, match="L9"):
            read_manifest(path)

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "manifest.csv"
        path.write_text("path,label\na.log,Pass,extra\n")
        with pytest.raises(ValueError, match="row 2"):
            read_manifest(path)

    def test_manifest_for_missing_file_raises(self, tmp_path):
        (tmp_path / "a.log").write_text("aaa")
        manifest = tmp_path / "m.csv"
        write_manifest(manifest, [("a.log", "Pass"), ("ghost.log", "L3")])
        with pytest.raises(ValueError, match="ghost.log"):
            scan_corpus(tmp_path, manifest=manifest)

    def test_preprocess_records_updates_sizes(self, tmp_path):
        records = [rec(0, "keep 123 " + "W" * 80)]
        cfg = PpuConfig(max_word_len=10, max_line_len=200)
        out = preprocess_records(records, cfg)
        assert out[0].text == "keep"
        assert out[0].char_count == 4
        assert out[0].byte_size == 4

    def test_category_patterns_filter_records(self):
        cfg = PpuConfig(category_patterns=[r"NR5G"])
        records = [rec(0, "NR5G CELL SETUP"), rec(1, "LTE CELL SETUP")]
        out = preprocess_records(records, cfg)
        assert [r.id for r in out] == ["r0000"]

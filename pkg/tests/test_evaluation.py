from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from tracelink.errors import LengthMismatch, MissingId, UnknownTag
from tracelink.evaluation import (
    AccuracyCurve,
    accuracy_curve,
    auc,
    best_ranks,
    k_cross,
    k_dom,
    report,
    write_report,
)
from tracelink.metrics import DistanceMatrix

GOLDEN = Path(__file__).parent / "data" / "golden_report.txt"


def mat(values, tag="cos:m"):
    values = np.asarray(values, dtype=np.float64)
    return DistanceMatrix(
        [f"s{i}" for i in range(values.shape[0])],
        [f"t{j}" for j in range(values.shape[1])],
        values, tag,
    )


def curve(values, tag="c"):
    return AccuracyCurve(tag, values)


class TestAccuracyCurve:
    def test_perfect_diagonal(self):
        m = mat(1 - np.eye(4))
        c = accuracy_curve(m, [(f"s{i}", f"t{i}") for i in range(4)])
        np.testing.assert_array_equal(c.values, [1, 1, 1, 1])
        assert auc(c) == 1.0

    def test_anti_diagonal(self):
        m = mat([[0.9, 0.1], [0.1, 0.9]])
        c = accuracy_curve(m, [("s0", "t0"), ("s1", "t1")])
        np.testing.assert_array_equal(c.values, [0.0, 1.0])
        assert auc(c) == 0.5

    def test_any_true_target_counts(self):
        m = mat([[0.5, 0.1, 0.9]])
        c = accuracy_curve(m, [("s0", "t0"), ("s0", "t1")])
        np.testing.assert_array_equal(c.values, [1, 1, 1])

    def test_unlinked_sources_ignored(self):
        m = mat([[0.1, 0.9], [0.9, 0.1]])
        c = accuracy_curve(m, [("s0", "t1")])
        np.testing.assert_array_equal(c.values, [0.0, 1.0])

    def test_ties_broken_by_index(self):
        m = mat([[0.5, 0.5, 0.5]])
        assert best_ranks(m, [("s0", "t2")]) == {"s0": 3}
        assert best_ranks(m, [("s0", "t0")]) == {"s0": 1}

    def test_excluded_pair_is_not_a_candidate(self):
        m = mat([[0.0, 0.3, 0.2]])
        assert best_ranks(m, [("s0", "t1")]) == {"s0": 3}
        assert best_ranks(m, [("s0", "t1")], exclude=[("s0", "t0")]) == {"s0": 2}

    @pytest.mark.parametrize("seed", range(5))
    def test_random_against_oracle(self, seed):
        r = np.random.default_rng(seed)
        values = np.round(r.random((10, 10)), 1)  # coarse values force ties
        links = [(f"s{i}", f"t{j}") for i in range(10) for j in range(10) if r.random() < 0.15]
        m = mat(values)
        expected = oracles.accuracy_curve(
            m.values.tolist(), m.source_ids, m.target_ids, links
        )
        if not expected:
            pytest.skip("no links drawn")
        c = accuracy_curve(m, links)
        np.testing.assert_allclose(c.values, expected, rtol=0, atol=1e-12)

    def test_missing_id(self):
        with pytest.raises(MissingId):
            accuracy_curve(mat([[0.1]]), [("s0", "nope")])
        with pytest.raises(MissingId):
            accuracy_curve(mat([[0.1]]), [("ghost", "t0")])

    def test_clamped_lookup(self):
        c = curve([0.5, 1.0])
        assert c.at(1) == 0.5 and c.at(10) == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            curve([0.6, 0.5])
        with pytest.raises(ValueError):
            curve([0.5, 1.5])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_monotone_and_bounded(self, n_s, n_t, seed):
        r = np.random.default_rng(seed)
        m = mat(r.random((n_s, n_t)))
        links = [(f"s{i}", f"t{r.integers(n_t)}") for i in range(n_s)]
        c = accuracy_curve(m, links)
        assert (np.diff(c.values) >= 0).all()
        assert c.values[-1] == 1.0
        a = auc(c)
        assert c.values.min() - 1e-12 <= a <= c.values.max() + 1e-12


class TestAuc:
    def test_examples(self):
        assert auc(curve([1.0, 1.0, 1.0])) == 1.0
        assert auc(curve([0.0, 0.5, 1.0])) == 0.5
        assert auc(curve([0.2, 0.4])) == pytest.approx(oracles.auc([0.2, 0.4]), abs=1e-15)


class TestDominance:
    def test_k_dom_example(self):
        assert k_dom(curve([0.1, 0.6, 1.0]), curve([0.2, 0.5, 1.0])) == 2

    def test_k_cross_example(self):
        assert k_cross(curve([0.1, 0.9, 1.0]), curve([0.3, 0.8, 1.0])) == 2

    def test_equal_curves(self):
        assert k_dom(curve([0.2, 0.7]), curve([0.2, 0.7])) == 0

    def test_never_catches_up(self):
        assert k_dom(curve([0.1, 0.5]), curve([0.2, 0.6])) is None

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            k_dom(curve([0.1, 1.0]), curve([1.0]))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=12))
    def test_against_oracle(self, pairs):
        a = np.maximum.accumulate([p[0] for p in pairs])
        b = np.maximum.accumulate([p[1] for p in pairs])
        assert k_dom(curve(a), curve(b)) == oracles.k_dom(list(a), list(b))


class TestReport:
    def test_single_perfect_curve(self):
        rep = report([curve([1.0] * 12, "cos:m")])
        lines = rep.text.splitlines()
        assert lines[0] == "targets (N): 12"
        row = next(line for line in lines if line.startswith("cos:m"))
        assert row.split()[1:] == ["1.0000"] * 4
        assert rep.auc == {"cos:m": 1.0}

    def test_pairing_lists_k(self):
        rep = report(
            [curve([0.1, 0.6, 1.0], "nl:m"), curve([0.2, 0.5, 1.0], "cos:m")],
            [("nl:m", "cos:m")],
        )
        assert rep.k_stats == {("nl:m", "cos:m"): 2}
        assert rep.text.splitlines()[-1].split() == ["nl:m", ">=", "cos:m", "2"]

    def test_never_printed_as_dash(self):
        rep = report([curve([0.1, 0.5], "a"), curve([0.2, 0.6], "b")], [("a", "b")])
        assert rep.text.splitlines()[-1].split()[-1] == "-"

    def test_unknown_tag(self):
        with pytest.raises(UnknownTag):
            report([curve([1.0], "a")], [("a", "zzz")])

    def test_golden(self):
        curves = [
            curve([0.25, 0.5, 0.5, 0.75, 1.0], "cos:SO"),
            curve([0.0, 0.5, 0.75, 1.0, 1.0], "nl:SO"),
            curve([0.25, 0.5, 0.75, 0.75, 1.0], "combined:SO"),
        ]
        rep = report(curves, [("nl:SO", "cos:SO"), ("nl:SO", "combined:SO")], title="golden")
        assert rep.text == GOLDEN.read_text(encoding="utf-8")

    def test_write(self, tmp_path):
        rep = report([curve([0.5, 1.0], "nl:a/b")])
        path = write_report(rep, tmp_path)
        assert path.read_text() == rep.text
        csv = (tmp_path / "curves" / "nl_a_b_curve.csv").read_text().splitlines()
        assert csv == ["k,acc", "1,0.5", "2,1.0"]

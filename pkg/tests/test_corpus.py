import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracelink import corpus
from tracelink.corpus import (
    Artifact,
    Role,
    TaskDataset,
    TaskKind,
    build_duplicates,
    build_summary_description,
    build_traceability,
    extract_ticket_id,
    tokenize,
)
from tracelink.errors import EmptyDataset, MalformedFile, SelfLink


class TestTokenize:
    def test_camel_case_and_punctuation(self):
        assert tokenize("Fix NullPointerException!") == ["fix", "null", "pointer", "exception"]

    def test_empty(self):
        assert tokenize("") == []

    def test_ticket_key_and_version(self):
        # "HADOOP" -> "hadoop"; "1234" is a digit string; "v2" -> "v", "2", both dropped
        assert tokenize("HADOOP-1234 v2") == ["hadoop"]

    def test_acronym_boundary(self):
        assert tokenize("HTTPServer parseXMLFile") == ["http", "server", "parse", "xml", "file"]

    def test_underscores_and_short_tokens(self):
        assert tokenize("get_bundle_id a b") == ["get", "bundle", "id"]

    def test_letter_digit_boundary(self):
        assert tokenize("log4j utf8Encoder") == ["log", "utf", "encoder"]

    @settings(max_examples=300, deadline=None)
    @given(st.text())
    def test_idempotent_on_joined_output(self, text):
        tokens = tokenize(text)
        assert tokenize(" ".join(tokens)) == tokens

    @settings(max_examples=200, deadline=None)
    @given(st.text())
    def test_token_shape(self, text):
        for tok in tokenize(text):
            assert len(tok) >= 2
            assert not tok.isdigit()
            assert tok == tok.lower()


class TestExtractTicketId:
    def test_basic(self):
        assert extract_ticket_id("HADOOP-1234: fix NPE") == "HADOOP-1234"

    def test_absent(self):
        assert extract_ticket_id("merge branch") is None

    def test_first_match_wins(self):
        assert extract_ticket_id("see FELIX-12 and FELIX-13") == "FELIX-12"

    def test_custom_pattern(self):
        assert extract_ticket_id("fixes #42", re.compile(r"#\d+")) == "#42"

    def test_lowercase_key_not_matched(self):
        assert extract_ticket_id("felix-12 fix") is None


def ticket(i, summary="summary text", description="some description"):
    return (i, summary, description)


class TestTraceability:
    def test_single_link(self):
        ds = build_traceability([("FELIX-1 fix", "c1")], [ticket("FELIX-1")])
        assert ds.kind is TaskKind.TRACEABILITY
        assert ds.source_ids == ["c1"]
        assert ds.target_ids == ["FELIX-1"]
        assert ds.links == (("c1", "FELIX-1"),)

    def test_commit_without_id_dropped(self):
        ds = build_traceability(
            [("FELIX-1 fix", "c1"), ("cleanup", "c2")], [ticket("FELIX-1")]
        )
        assert ds.source_ids == ["c1"]
        assert ds.dropped["source"] == 1

    def test_ticket_without_description_drops_its_commits(self):
        ds = build_traceability(
            [("FELIX-1 fix", "c1"), ("FELIX-2 fix", "c2")],
            [ticket("FELIX-1"), ticket("FELIX-2", description="  ")],
        )
        assert ds.target_ids == ["FELIX-1"]
        assert ds.source_ids == ["c1"]
        assert ds.dropped == {"source": 1, "target": 1}

    def test_ticket_id_stripped_from_source_text(self):
        ds = build_traceability([("FELIX-1: fix resolver", "c1")], [ticket("FELIX-1")])
        assert "FELIX-1" not in ds.sources[0].raw_text
        assert ds.sources[0].tokens == ("fix", "resolver")

    def test_target_text_is_summary_plus_description(self):
        ds = build_traceability([("FELIX-1", "c1")], [ticket("FELIX-1", "Short", "Long text")])
        assert ds.targets[0].raw_text == "Short Long text"

    def test_unlinked_tickets_stay_as_decoys(self):
        ds = build_traceability([("FELIX-1", "c1")], [ticket("FELIX-1"), ticket("FELIX-2")])
        assert ds.target_ids == ["FELIX-1", "FELIX-2"]

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            build_traceability([("no id here", "c1")], [ticket("FELIX-1")])

    def test_cleaning_is_monotone(self):
        commits = [("FELIX-1 a", "c1"), ("FELIX-2 b", "c2")]
        tickets = [ticket("FELIX-1"), ticket("FELIX-2")]
        base = build_traceability(commits, tickets)
        noisy = build_traceability(
            commits + [("no ticket", "c9"), ("FELIX-7 orphan", "c8")],
            tickets + [ticket("FELIX-7", description=None)],
        )
        assert noisy.sources == base.sources
        assert noisy.targets == base.targets
        assert noisy.links == base.links


class TestDuplicates:
    def test_source_excluded_from_its_candidates(self):
        ds = build_duplicates([ticket("T1"), ticket("T2"), ticket("T3")], [("T1", "T2")])
        assert ds.source_ids == ["T1"]
        assert ds.target_ids == ["T2", "T3"]
        assert ds.links == (("T1", "T2"),)

    def test_ticket_that_is_both_source_and_target(self):
        ds = build_duplicates(
            [ticket("T1"), ticket("T2"), ticket("T3")], [("T1", "T2"), ("T3", "T1")]
        )
        assert set(ds.target_ids) == {"T1", "T2"}
        assert ds.excluded_pairs == frozenset({("T1", "T1")})

    def test_self_link(self):
        with pytest.raises(SelfLink):
            build_duplicates([ticket("T1")], [("T1", "T1")])

    def test_empty_links(self):
        with pytest.raises(EmptyDataset):
            build_duplicates([ticket("T1"), ticket("T2")], [])

    def test_links_to_dropped_ticket_removed(self):
        ds = build_duplicates(
            [ticket("T1"), ticket("T2"), ticket("T3", description="")],
            [("T1", "T2"), ("T1", "T3")],
        )
        assert ds.links == (("T1", "T2"),)


class TestSummaryDescription:
    def test_identity_links(self):
        ds = build_summary_description([ticket("A", "s1", "d1"), ticket("B", "s2", "d2")])
        assert ds.links == (("A", "A"), ("B", "B"))
        assert [a.raw_text for a in ds.sources] == ["s1", "s2"]
        assert [a.raw_text for a in ds.targets] == ["d1", "d2"]

    def test_missing_description_dropped(self):
        ds = build_summary_description([ticket("A"), ticket("B", description=None)])
        assert ds.source_ids == ["A"]

    def test_missing_summary_dropped(self):
        ds = build_summary_description([ticket("A"), ticket("B", summary="")])
        assert ds.source_ids == ["A"]

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            build_summary_description([ticket("A", summary=None)])


class TestDatasetInvariants:
    def test_unknown_link_rejected(self):
        with pytest.raises(ValueError):
            TaskDataset(
                TaskKind.TRACEABILITY,
                [Artifact("s", Role.SOURCE, "x")],
                [Artifact("t", Role.TARGET, "y")],
                [("s", "missing")],
            )

    def test_unlinked_source_rejected(self):
        with pytest.raises(ValueError):
            TaskDataset(
                TaskKind.TRACEABILITY,
                [Artifact("s", Role.SOURCE, "x"), Artifact("s2", Role.SOURCE, "x")],
                [Artifact("t", Role.TARGET, "y")],
                [("s", "t")],
            )

    def test_tokens_follow_text(self):
        art = Artifact("a", Role.SOURCE, "BundleContext")
        assert art.tokens == ("bundle", "context")


class TestFiles:
    def test_dataset_round_trip(self, tmp_path):
        ds = build_duplicates(
            [ticket("T1"), ticket("T2", "Summary two"), ticket("T3")],
            [("T1", "T2"), ("T3", "T1")],
        )
        path = tmp_path / "ds.jsonl"
        corpus.write_dataset(ds, path)
        again = corpus.read_dataset(path)
        assert again == ds
        assert again.dropped == ds.dropped
        header = path.read_text().splitlines()[0]
        assert '"kind": "duplicates"' in header
        assert '"links": 2' in header

    def test_read_fixture_inputs(self, fixtures_dir):
        commits = corpus.read_commits(fixtures_dir / "commits.jsonl")
        tickets = corpus.read_tickets(fixtures_dir / "tickets.jsonl")
        assert len(commits) == 20 and len(tickets) == 15
        ds = build_traceability(commits, tickets)
        assert ds.counts() == {"sources": 16, "targets": 14, "links": 16}

    def test_links_csv_self_link_names_row(self, tmp_path):
        path = tmp_path / "links.csv"
        path.write_text("source_id,target_id\nT1,T2\nT3,T3\n")
        with pytest.raises(SelfLink) as info:
            corpus.read_links(path)
        assert info.value.row == 3

    def test_links_csv_without_header(self, tmp_path):
        path = tmp_path / "links.csv"
        path.write_text("T1,T2\r\nT3,T4\r\n")
        assert corpus.read_links(path) == [("T1", "T2"), ("T3", "T4")]

    def test_bad_jsonl(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "c1", "message": "x"}\n{oops\n')
        with pytest.raises(MalformedFile):
            corpus.read_commits(path)

    def test_header_count_mismatch(self, tmp_path):
        ds = build_traceability([("FELIX-1", "c1")], [ticket("FELIX-1")])
        path = tmp_path / "ds.jsonl"
        corpus.write_dataset(ds, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(MalformedFile):
            corpus.read_dataset(path)

"""Raw project data -> cleaned TaskDatasets.

Input formats:

* commits: JSON Lines ``{"id", "message"}``
* tickets: JSON Lines ``{"id", "summary", "description"}``
* duplicate links: CSV rows ``source_id,target_id`` (optional header)

A dataset is written back as one JSON Lines file: a header record
``{"kind", "counts", "dropped"}`` followed by artifact and link records.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import EmptyDataset, MalformedFile, SelfLink

logger = logging.getLogger(__name__)

DEFAULT_TICKET_PATTERN = re.compile(r"\b[A-Z]+-\d+\b")


class Role(str, enum.Enum):
    SOURCE = "source"
    TARGET = "target"


class TaskKind(str, enum.Enum):
    TRACEABILITY = "traceability"
    DUPLICATES = "duplicates"
    SUMMARY_TO_DESCRIPTION = "summary_to_description"


class Commit(NamedTuple):
    message: str
    id: str


class Ticket(NamedTuple):
    id: str
    summary: str | None
    description: str | None


def _char_class(c: str) -> str:
    if c.isdigit():
        return "digit"
    if c.isupper():
        return "upper"
    if c.isalnum():
        return "lower"
    return "other"


def _split_word(word: str) -> list[str]:
    """Split camelCase, PascalCase and letter/digit boundaries."""
    parts: list[str] = []
    start = 0
    for i in range(1, len(word)):
        prev, cur = _char_class(word[i - 1]), _char_class(word[i])
        nxt = _char_class(word[i + 1]) if i + 1 < len(word) else None
        boundary = (
            (prev == "lower" and cur == "upper")
            or (prev == "upper" and cur == "upper" and nxt == "lower")
            or ((prev == "digit") != (cur == "digit"))
        )
        if boundary:
            parts.append(word[start:i])
            start = i
    parts.append(word[start:])
    return parts


_NON_ALNUM = re.compile(r"[\W_]+")


def tokenize(text: str) -> list[str]:
    """Tokenize artifact text.

    Camel-case and letter/digit boundaries are split first, then the text is
    split on every non-alphanumeric character and lowercased. Tokens shorter
    than two characters and pure digit strings are dropped.

    >>> tokenize("Fix NullPointerException!")
    ['fix', 'null', 'pointer', 'exception']
    """
    tokens: list[str] = []
    for word in _NON_ALNUM.split(text):
        if not word:
            continue
        for piece in _split_word(word):
            # lowercasing can introduce combining marks (e.g. U+0130)
            for tok in _NON_ALNUM.split(piece.lower()):
                if len(tok) >= 2 and not tok.isdigit():
                    tokens.append(tok)
    return tokens


def extract_ticket_id(
    commit_message: str, project_key_pattern: re.Pattern | str = DEFAULT_TICKET_PATTERN
) -> str | None:
    """Return the first ticket id mentioned in a commit message, or None."""
    match = re.search(project_key_pattern, commit_message)
    return match.group(0) if match else None


@dataclass(frozen=True)
class Artifact:
    id: str
    role: Role
    raw_text: str
    tokens: tuple[str, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "tokens", tuple(tokenize(self.raw_text)))


@dataclass(frozen=True)
class TaskDataset:
    """Source and target artifacts of one task plus the gold links."""

    kind: TaskKind
    sources: tuple[Artifact, ...]
    targets: tuple[Artifact, ...]
    links: tuple[tuple[str, str], ...]
    dropped: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "links", tuple(dict.fromkeys(map(tuple, self.links))))
        self.validate()

    def validate(self) -> None:
        for role, arts in ((Role.SOURCE, self.sources), (Role.TARGET, self.targets)):
            ids = [a.id for a in arts]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate {role.value} ids")
            if any(a.role is not role for a in arts):
                raise ValueError(f"artifact with wrong role among {role.value}s")
        sources, targets = set(self.source_ids), set(self.target_ids)
        for s, t in self.links:
            if s not in sources or t not in targets:
                raise ValueError(f"link ({s}, {t}) references an unknown artifact")
        unlinked = sources - {s for s, _ in self.links}
        if unlinked:
            raise ValueError(f"sources without links: {sorted(unlinked)[:5]}")

    @property
    def source_ids(self) -> list[str]:
        return [a.id for a in self.sources]

    @property
    def target_ids(self) -> list[str]:
        return [a.id for a in self.targets]

    @cached_property
    def links_by_source(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for s, t in self.links:
            out.setdefault(s, set()).add(t)
        return out

    @property
    def excluded_pairs(self) -> frozenset[tuple[str, str]]:
        """(source, target) pairs that are never candidates.

        In the duplicates task a ticket may be both a source and a target; it
        is not a candidate for itself.
        """
        if self.kind is not TaskKind.DUPLICATES:
            return frozenset()
        targets = set(self.target_ids)
        return frozenset((s, s) for s in self.source_ids if s in targets)

    def counts(self) -> dict[str, int]:
        return {
            "sources": len(self.sources),
            "targets": len(self.targets),
            "links": len(self.links),
        }


def _has_text(value: str | None) -> bool:
    return bool(value and value.strip())


def _ticket_text(ticket: Ticket) -> str:
    return f"{ticket.summary or ''} {ticket.description or ''}".strip()


def _retained_tickets(tickets: Iterable) -> tuple[dict[str, Ticket], int]:
    retained: dict[str, Ticket] = {}
    dropped = 0
    for raw in tickets:
        ticket = Ticket(*raw)
        if ticket.id in retained or not _has_text(ticket.description):
            dropped += 1
            continue
        retained[ticket.id] = ticket
    return retained, dropped


def build_traceability(
    commits: Iterable,
    tickets: Iterable,
    project_key_pattern: re.Pattern | str = DEFAULT_TICKET_PATTERN,
) -> TaskDataset:
    """Commit -> ticket dataset.

    Commits without an extractable ticket id, commits whose ticket was not
    retained and tickets without description are dropped. The matched ticket
    id is removed from the commit text.
    """
    retained, dropped_targets = _retained_tickets(tickets)
    sources: list[Artifact] = []
    links: list[tuple[str, str]] = []
    seen: set[str] = set()
    dropped_sources = 0
    for raw in commits:
        commit = Commit(*raw)
        ticket_id = extract_ticket_id(commit.message, project_key_pattern)
        if ticket_id is None or ticket_id not in retained or commit.id in seen:
            dropped_sources += 1
            continue
        seen.add(commit.id)
        text = " ".join(commit.message.replace(ticket_id, " ").split())
        sources.append(Artifact(commit.id, Role.SOURCE, text))
        links.append((commit.id, ticket_id))
    if not links:
        raise EmptyDataset("no commit-ticket links survive cleaning")
    targets = [Artifact(t.id, Role.TARGET, _ticket_text(t)) for t in retained.values()]
    return TaskDataset(
        TaskKind.TRACEABILITY,
        sources,
        targets,
        links,
        dropped={"source": dropped_sources, "target": dropped_targets},
    )


def build_duplicates(tickets: Iterable, duplicate_links: Sequence) -> TaskDataset:
    """Ticket -> duplicate ticket dataset.

    Each pair ``(a, b)`` makes ``a`` a source linked to target ``b``. Every
    retained ticket is a candidate target (decoy) except tickets that only
    ever occur as sources.
    """
    for row, (a, b) in enumerate(duplicate_links, start=1):
        if a == b:
            raise SelfLink(a, row)
    retained, dropped_targets = _retained_tickets(tickets)
    links = [
        (a, b) for a, b in dict.fromkeys(map(tuple, duplicate_links))
        if a in retained and b in retained
    ]
    dropped_links = len(duplicate_links) - len(links)
    if not links:
        raise EmptyDataset("no duplicate links survive cleaning")
    source_ids = list(dict.fromkeys(a for a, _ in links))
    linked_targets = {b for _, b in links}
    only_sources = set(source_ids) - linked_targets
    sources = [Artifact(i, Role.SOURCE, _ticket_text(retained[i])) for i in source_ids]
    targets = [
        Artifact(t.id, Role.TARGET, _ticket_text(t))
        for t in retained.values()
        if t.id not in only_sources
    ]
    return TaskDataset(
        TaskKind.DUPLICATES,
        sources,
        targets,
        links,
        dropped={"source": dropped_links, "target": dropped_targets},
    )


def build_summary_description(tickets: Iterable) -> TaskDataset:
    """Ticket summary -> description of the same ticket."""
    sources: list[Artifact] = []
    targets: list[Artifact] = []
    seen: set[str] = set()
    dropped = 0
    for raw in tickets:
        ticket = Ticket(*raw)
        if ticket.id in seen or not (
            _has_text(ticket.summary) and _has_text(ticket.description)
        ):
            dropped += 1
            continue
        seen.add(ticket.id)
        sources.append(Artifact(ticket.id, Role.SOURCE, ticket.summary))
        targets.append(Artifact(ticket.id, Role.TARGET, ticket.description))
    if not sources:
        raise EmptyDataset("no ticket has both summary and description")
    return TaskDataset(
        TaskKind.SUMMARY_TO_DESCRIPTION,
        sources,
        targets,
        [(a.id, a.id) for a in sources],
        dropped={"source": dropped, "target": dropped},
    )


# -- file formats -----------------------------------------------------------


def _read_jsonl(path: str | Path) -> list[dict]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc.msg}") from None
    return records


def read_commits(path: str | Path) -> list[Commit]:
    try:
        return [Commit(str(r["message"]), str(r["id"])) for r in _read_jsonl(path)]
    except KeyError as exc:
        raise MalformedFile(f"{path}: commit record without {exc}") from None


def read_tickets(path: str | Path) -> list[Ticket]:
    try:
        return [
            Ticket(str(r["id"]), r.get("summary"), r.get("description"))
            for r in _read_jsonl(path)
        ]
    except KeyError as exc:
        raise MalformedFile(f"{path}: ticket record without {exc}") from None


def read_links(path: str | Path) -> list[tuple[str, str]]:
    """Read ``source_id,target_id`` rows; self-links raise SelfLink with the line."""
    links = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise MalformedFile(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            a, b = row[0].strip(), row[1].strip()
            if lineno == 1 and (a, b) == ("source_id", "target_id"):
                continue
            if a == b:
                raise SelfLink(a, lineno)
            links.append((a, b))
    return links


def write_dataset(dataset: TaskDataset, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        header = {
            "kind": dataset.kind.value,
            "counts": dataset.counts(),
            "dropped": dataset.dropped,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for art in (*dataset.sources, *dataset.targets):
            rec = {"record": "artifact", "role": art.role.value, "id": art.id, "text": art.raw_text}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        for s, t in dataset.links:
            fh.write(json.dumps({"record": "link", "source": s, "target": t}, sort_keys=True) + "\n")


def read_dataset(path: str | Path) -> TaskDataset:
    records = _read_jsonl(path)
    if not records or "kind" not in records[0]:
        raise MalformedFile(f"{path}: missing dataset header record")
    header, body = records[0], records[1:]
    sources, targets, links = [], [], []
    try:
        for rec in body:
            if rec["record"] == "artifact":
                art = Artifact(rec["id"], Role(rec["role"]), rec["text"])
                (sources if art.role is Role.SOURCE else targets).append(art)
            elif rec["record"] == "link":
                links.append((rec["source"], rec["target"]))
            else:
                raise MalformedFile(f"{path}: unknown record type {rec['record']!r}")
        dataset = TaskDataset(header["kind"], sources, targets, links, header.get("dropped", {}))
    except (KeyError, ValueError) as exc:
        if isinstance(exc, MalformedFile):
            raise
        raise MalformedFile(f"{path}: {exc}") from None
    if header.get("counts") and header["counts"] != dataset.counts():
        raise MalformedFile(f"{path}: header counts {header['counts']} do not match body")
    return dataset

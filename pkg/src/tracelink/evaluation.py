"""Accuracy@k curves and the statistics derived from them."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import LengthMismatch, MissingId, UnknownTag
from .metrics import DistanceMatrix


@dataclass(frozen=True)
class AccuracyCurve:
    """acc@k for k = 1..N; ``values[k - 1]`` is acc@k."""

    metric_tag: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("accuracy curve must be a non-empty 1-d sequence")
        if (values < 0).any() or (values > 1).any():
            raise ValueError("accuracies must lie in [0, 1]")
        if (np.diff(values) < 0).any():
            raise ValueError("accuracy curve must be nondecreasing")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def at(self, k: int) -> float:
        """acc@k; k beyond the curve is clamped to its last point."""
        return float(self.values[min(k, len(self)) - 1])


def best_ranks(
    m: DistanceMatrix,
    links: Iterable[tuple[str, str]],
    exclude: Iterable[tuple[str, str]] = (),
) -> dict[str, int]:
    """1-based rank of the best-ranked true target for every linked source.

    Ranks follow the :func:`~tracelink.metrics.rank_targets` order (ascending
    distance, ties by target index). Excluded pairs are not candidates.
    """
    row_of = {s: i for i, s in enumerate(m.source_ids)}
    col_of = {t: j for j, t in enumerate(m.target_ids)}
    truth: dict[str, list[int]] = {}
    for s, t in links:
        if s not in row_of:
            raise MissingId(f"linked source {s!r} not in matrix rows")
        if t not in col_of:
            raise MissingId(f"linked target {t!r} not in matrix columns")
        truth.setdefault(s, []).append(col_of[t])
    excluded: dict[str, list[int]] = {}
    for s, t in exclude:
        if s in row_of and t in col_of:
            excluded.setdefault(s, []).append(col_of[t])

    ranks = {}
    for s in m.source_ids:
        if s not in truth:
            continue
        row = m.values[row_of[s]].astype(np.float64)
        if s in excluded:
            row[excluded[s]] = np.inf
        best = None
        for j in truth[s]:
            v = row[j]
            rank = int(np.count_nonzero(row < v) + np.count_nonzero(row[:j] == v)) + 1
            best = rank if best is None else min(best, rank)
        ranks[s] = best
    return ranks


def accuracy_curve(
    m: DistanceMatrix,
    links: Iterable[tuple[str, str]],
    exclude: Iterable[tuple[str, str]] = (),
    tag: str | None = None,
) -> AccuracyCurve:
    """Fraction of linked sources with a true target among their k nearest.

    A source with several true targets is a hit once any of them is in the
    top k. Only sources that have at least one link are counted.
    """
    ranks = best_ranks(m, links, exclude)
    if not ranks:
        raise ValueError("no linked source in the matrix")
    n_targets = m.shape[1]
    counts = np.bincount(list(ranks.values()), minlength=n_targets + 1)[1:n_targets + 1]
    return AccuracyCurve(tag or m.metric_tag, np.cumsum(counts) / len(ranks))


def auc(curve: AccuracyCurve) -> float:
    """Area under the acc@k curve, normalized by its length."""
    return math.fsum(curve.values) / len(curve)


def k_dom(challenger: AccuracyCurve, baseline: AccuracyCurve) -> int | None:
    """Smallest k from which ``challenger >= baseline`` at every larger k.

    Returns 0 when the challenger dominates the whole curve and None when
    it is below the baseline at the last point.
    """
    if len(challenger) != len(baseline):
        raise LengthMismatch(
            f"curves of length {len(challenger)} and {len(baseline)}"
        )
    below = np.nonzero(challenger.values < baseline.values)[0]
    if below.size == 0:
        return 0
    last = int(below[-1]) + 1  # 1-based k of the last point below the baseline
    if last == len(challenger):
        return None
    return last + 1


def k_cross(nl: AccuracyCurve, combined: AccuracyCurve) -> int | None:
    """:func:`k_dom` with the learned-distance curve against a combined one."""
    return k_dom(nl, combined)


# -- reports ----------------------------------------------------------------

REPORT_KS = (1, 5, 10)


@dataclass
class Report:
    text: str
    curve_csv: dict[str, str] = field(default_factory=dict)
    auc: dict[str, float] = field(default_factory=dict)
    k_stats: dict[tuple[str, str], int | None] = field(default_factory=dict)


def curve_csv(curve: AccuracyCurve) -> str:
    lines = ["k,acc"]
    lines += [f"{k},{v!r}" for k, v in enumerate(curve.values.tolist(), start=1)]
    return "\n".join(lines) + "\n"


def safe_filename(tag: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.+-]+", "_", tag).strip("_") or "curve"


def report(
    curves: Sequence[AccuracyCurve],
    pairings: Sequence[tuple[str, str]] = (),
    title: str | None = None,
) -> Report:
    """Text table of AUC and acc@1/5/10 per curve plus K per pairing.

    For each ``(challenger, baseline)`` pairing K is the smallest k from which
    the challenger dominates (0: everywhere, "-": never).
    """
    by_tag = {c.metric_tag: c for c in curves}
    for pair in pairings:
        for tag in pair:
            if tag not in by_tag:
                raise UnknownTag(f"pairing refers to unknown curve {tag!r}")

    width = max([len("curve")] + [len(t) for t in by_tag]) + 2
    lines = []
    if title:
        lines += [title, ""]
    n_points = sorted({len(c) for c in curves})
    lines.append(f"targets (N): {', '.join(map(str, n_points))}")
    lines.append("")
    header = "curve".ljust(width) + "AUC".rjust(8)
    header += "".join(f"acc@{k}".rjust(9) for k in REPORT_KS)
    lines.append(header)
    out = Report("", {})
    for c in curves:
        out.auc[c.metric_tag] = auc(c)
        row = c.metric_tag.ljust(width) + f"{out.auc[c.metric_tag]:8.4f}"
        row += "".join(f"{c.at(k):9.4f}" for k in REPORT_KS)
        lines.append(row)
        out.curve_csv[c.metric_tag] = curve_csv(c)

    if pairings:
        lines += ["", "dominance (smallest k from which challenger >= baseline)"]
        pw = max(len(f"{a} >= {b}") for a, b in pairings) + 2
        for a, b in pairings:
            k = k_dom(by_tag[a], by_tag[b])
            out.k_stats[(a, b)] = k
            lines.append(f"{a} >= {b}".ljust(pw) + ("-" if k is None else str(k)).rjust(6))
    out.text = "\n".join(lines) + "\n"
    return out


def write_report(rep: Report, out_dir: str | Path, curves_dir: str = "curves") -> Path:
    out_dir = Path(out_dir)
    (out_dir / curves_dir).mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.txt"
    path.write_text(rep.text, encoding="utf-8")
    for tag, text in rep.curve_csv.items():
        (out_dir / curves_dir / f"{safe_filename(tag)}_curve.csv").write_text(text, encoding="utf-8")
    return path

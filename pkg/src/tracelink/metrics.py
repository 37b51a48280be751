"""Pairwise distances between source and target document vectors.

Smaller is closer for every metric. Cosine distances lie in ``[0, 2]``;
the learned distance is ``1 - p`` with ``p`` the network's link
probability, so it lies in ``[0, 1]``.

Binary matrix file layout (little-endian)::

    b"DMAT" | u32 n_sources | u32 n_targets
    | n_sources x (u32 len | utf-8 id) | n_targets x (u32 len | utf-8 id)
    | n_sources * n_targets x f32, row-major
"""

from __future__ import annotations

import csv
import io
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .docvec import DocumentVector, stack
from .errors import (
    DimensionMismatch,
    IdOrderMismatch,
    IndexOutOfRange,
    LengthMismatch,
    MalformedFile,
    ModelMismatch,
    ShapeMismatch,
)
from .neural import MlpModel, forward

_MAGIC = b"DMAT"
_RANGE_SLACK = 1e-6


@dataclass(frozen=True)
class DistanceMatrix:
    source_ids: tuple[str, ...]
    target_ids: tuple[str, ...]
    values: np.ndarray
    metric_tag: str

    def __post_init__(self):
        object.__setattr__(self, "source_ids", tuple(self.source_ids))
        object.__setattr__(self, "target_ids", tuple(self.target_ids))
        values = np.asarray(self.values, dtype=np.float32)
        if values.shape != (len(self.source_ids), len(self.target_ids)):
            raise ShapeMismatch(
                f"values shape {values.shape} does not match "
                f"{len(self.source_ids)} sources x {len(self.target_ids)} targets"
            )
        if not np.isfinite(values).all():
            raise ValueError(f"{self.metric_tag}: non-finite distance")
        lo, hi = _tag_range(self.metric_tag)
        if values.size and (values.min() < lo - _RANGE_SLACK or values.max() > hi + _RANGE_SLACK):
            raise ValueError(f"{self.metric_tag}: distances outside [{lo}, {hi}]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def select_rows(self, source_ids: Sequence[str]) -> "DistanceMatrix":
        pos = {s: i for i, s in enumerate(self.source_ids)}
        rows = [pos[s] for s in source_ids]
        return DistanceMatrix(source_ids, self.target_ids, self.values[rows], self.metric_tag)


def _tag_range(tag: str) -> tuple[float, float]:
    if tag.startswith("cos"):
        return 0.0, 2.0
    if tag.startswith("nl"):
        return 0.0, 1.0
    return -np.inf, np.inf


# -- cosine -------------------------------------------------------------------


def _unit_scale(Y: np.ndarray) -> np.ndarray:
    """Rows divided by their max-abs entry; cosine is scale-free and this
    keeps squared norms away from overflow and underflow."""
    peak = np.abs(Y).max(axis=1, keepdims=True)
    return Y / np.where(peak > 0, peak, 1.0)


def _sq_norms(Y: np.ndarray) -> np.ndarray:
    return (Y * Y).sum(axis=1)


def _cosine_row(x: np.ndarray, Y: np.ndarray, y_sq: np.ndarray) -> np.ndarray:
    """Cosine distances of ``x`` to the rows of ``Y`` (both already scaled)."""
    x_sq = (x * x).sum()
    dots = (Y * x).sum(axis=1)
    # sqrt(|x|^2 |y|^2) instead of |x| |y| keeps d(x, x) exactly 0
    denom = np.sqrt(x_sq * y_sq)
    out = np.ones(Y.shape[0])
    ok = (y_sq > 0) & (x_sq > 0)
    out[ok] = 1.0 - dots[ok] / denom[ok]
    return np.clip(out, 0.0, 2.0)


def cosine_distance(x, y) -> float:
    """``1 - <x, y> / (|x| |y|)``; 1.0 when either vector is zero."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"vectors of shape {x.shape} and {y.shape}")
    Y = _unit_scale(y[None, :])
    return float(_cosine_row(_unit_scale(x[None, :])[0], Y, _sq_norms(Y))[0])


# -- learned distance -----------------------------------------------------------


def _nl_row(model: MlpModel, x: np.ndarray, Y: np.ndarray) -> np.ndarray:
    p, _ = forward(model, x[None, :] - Y)
    return 1.0 - p


def nl_distance(model: MlpModel, diff) -> float:
    """``1 - p`` for a source-minus-target difference vector (inference mode)."""
    diff = np.asarray(diff, dtype=np.float64)
    if diff.ndim != 1 or diff.shape[0] != model.input_dim:
        raise DimensionMismatch(
            f"difference vector has shape {diff.shape}, model expects ({model.input_dim},)"
        )
    p, _ = forward(model, diff)
    return 1.0 - p


Metric = Union[str, MlpModel]


def distance_matrix(
    sources: Sequence[DocumentVector],
    targets: Sequence[DocumentVector],
    metric: Metric = "cosine",
    tag: str | None = None,
    workers: int | None = None,
    block_rows: int = 256,
) -> DistanceMatrix:
    """All source x target distances.

    ``metric`` is ``"cosine"`` or a trained :class:`MlpModel`. For the learned
    metric each entry uses ``source - target``. Rows are independent and are
    computed in blocks on up to ``workers`` threads.
    """
    S = stack(sources)
    T = stack(targets)
    if sources[0].model_name != targets[0].model_name:
        raise ModelMismatch(
            f"sources use {sources[0].model_name!r}, targets {targets[0].model_name!r}"
        )
    if S.shape[1] != T.shape[1]:
        raise DimensionMismatch(f"source dim {S.shape[1]} != target dim {T.shape[1]}")
    model_name = sources[0].model_name

    if isinstance(metric, MlpModel):
        if metric.input_dim != S.shape[1]:
            raise DimensionMismatch(
                f"network expects {metric.input_dim} inputs, vectors have {S.shape[1]}"
            )

        def row(i):
            return _nl_row(metric, S[i], T)

        tag = tag or f"nl:{model_name}"
    elif metric == "cosine":
        S_unit, T_unit = _unit_scale(S), _unit_scale(T)
        t_sq = _sq_norms(T_unit)

        def row(i):
            return _cosine_row(S_unit[i], T_unit, t_sq)

        tag = tag or f"cos:{model_name}"
    else:
        raise ValueError(f"unknown metric {metric!r}")

    values = np.empty((S.shape[0], T.shape[0]), dtype=np.float32)

    def fill(block):
        for i in block:
            try:
                values[i] = row(i)
            except Exception as exc:
                exc.args = (f"row {i} ({sources[i].artifact_id}): {exc}",)
                raise

    blocks = [range(a, min(a + block_rows, S.shape[0])) for a in range(0, S.shape[0], block_rows)]
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(blocks) == 1:
        for block in blocks:
            fill(block)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, blocks))
    return DistanceMatrix(
        [s.artifact_id for s in sources], [t.artifact_id for t in targets], values, tag
    )


def combine_matrices(ms: Sequence[DistanceMatrix], tag: str | None = None) -> DistanceMatrix:
    """Element-wise mean of distance matrices over identical id orders."""
    if not ms:
        raise ValueError("nothing to combine")
    first = ms[0]
    for m in ms[1:]:
        if m.shape != first.shape:
            raise ShapeMismatch(f"{m.metric_tag} has shape {m.shape}, expected {first.shape}")
        if m.source_ids != first.source_ids or m.target_ids != first.target_ids:
            raise IdOrderMismatch(f"{m.metric_tag} and {first.metric_tag} differ in id order")
    total = np.zeros(first.shape, dtype=np.float64)
    for m in ms:
        total += m.values
    tag = tag or "combined(" + ",".join(m.metric_tag for m in ms) + ")"
    return DistanceMatrix(first.source_ids, first.target_ids, total / len(ms), tag)


def rank_targets(m: DistanceMatrix, source_index: int, k: int) -> list[tuple[str, float]]:
    """The ``k`` nearest targets of one source, ties broken by target index."""
    n_sources, n_targets = m.shape
    if not 0 <= source_index < n_sources:
        raise IndexOutOfRange(f"source index {source_index} not in [0, {n_sources})")
    if not 1 <= k <= n_targets:
        raise IndexOutOfRange(f"k={k} not in [1, {n_targets}]")
    row = m.values[source_index]
    order = np.argsort(row, kind="stable")[:k]
    return [(m.target_ids[j], float(row[j])) for j in order]


# -- persistence ------------------------------------------------------------------


def _pack_ids(ids: Sequence[str]) -> bytes:
    out = bytearray()
    for i in ids:
        raw = i.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
    return bytes(out)


def save_matrix(m: DistanceMatrix, path: str | Path) -> None:
    n_s, n_t = m.shape
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC + struct.pack("<II", n_s, n_t))
        fh.write(_pack_ids(m.source_ids))
        fh.write(_pack_ids(m.target_ids))
        fh.write(m.values.astype("<f4").tobytes())


def load_matrix(path: str | Path, metric_tag: str | None = None) -> DistanceMatrix:
    """Read a DMAT file. The format carries no tag; it defaults to the file stem."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != _MAGIC or len(data) < 12:
        raise MalformedFile(f"{path}: not a DMAT file")
    n_s, n_t = struct.unpack_from("<II", data, 4)
    offset = 12
    try:
        ids = []
        for _ in range(n_s + n_t):
            (n,) = struct.unpack_from("<I", data, offset)
            offset += 4
            ids.append(data[offset:offset + n].decode("utf-8"))
            offset += n
        if len(data) - offset != 4 * n_s * n_t:
            raise MalformedFile(f"{path}: expected {n_s}x{n_t} values")
        values = np.frombuffer(data, dtype="<f4", offset=offset).reshape(n_s, n_t)
    except (struct.error, UnicodeDecodeError) as exc:
        raise MalformedFile(f"{path}: truncated or corrupt ({exc})") from None
    return DistanceMatrix(ids[:n_s], ids[n_s:], values, metric_tag or path.stem)


def matrix_to_csv(m: DistanceMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source_id", *m.target_ids])
    for sid, row in zip(m.source_ids, m.values):
        writer.writerow([sid, *(repr(float(v)) for v in row)])
    return buf.getvalue()

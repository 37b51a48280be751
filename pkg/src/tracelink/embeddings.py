"""Pretrained word-embedding models in the word2vec text format.

The text format is a header line ``<vocab_count> <dim>`` followed by one
row per token: ``<token> <dim space-separated reals>``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import CountMismatch, DimensionMismatch, MalformedHeader

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WordEmbeddingModel:
    """Immutable token -> vector map.

    Vectors live in one read-only ``(vocab_size, dim)`` float32 matrix;
    ``index`` maps each token to its row.
    """

    name: str
    dim: int
    index: Mapping[str, int]
    vectors: np.ndarray
    duplicate_count: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.dim <= 0:
            raise DimensionMismatch(f"dimension must be positive, got {self.dim}")
        vectors = np.array(self.vectors, dtype=np.float32, copy=True)
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise DimensionMismatch(
                f"vector matrix has shape {vectors.shape}, expected (*, {self.dim})"
            )
        if vectors.shape[0] != len(self.index):
            raise CountMismatch(
                f"{len(self.index)} tokens but {vectors.shape[0]} vectors"
            )
        if not np.isfinite(vectors).all():
            raise ValueError("embedding vectors must be finite")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "index", MappingProxyType(dict(self.index)))

    @classmethod
    def from_dict(cls, name: str, vocab: Mapping[str, "np.ndarray | list[float]"]):
        tokens = list(vocab)
        if not tokens:
            raise CountMismatch("empty vocabulary")
        matrix = np.asarray([np.asarray(vocab[t], dtype=np.float64) for t in tokens])
        if matrix.ndim != 2:
            raise DimensionMismatch("vectors have differing lengths")
        return cls(name, matrix.shape[1], {t: i for i, t in enumerate(tokens)}, matrix)

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def tokens(self) -> list[str]:
        return list(self.index)


def lookup(model: WordEmbeddingModel, token: str) -> np.ndarray | None:
    """Return the stored vector for ``token``, or None if it is absent.

    Matching is exact; no case folding.
    """
    row = model.index.get(token)
    if row is None:
        return None
    return model.vectors[row]


def _parse_header(line: str) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise MalformedHeader(f"expected '<vocab_count> <dim>', got {line.strip()!r}")
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise MalformedHeader(f"non-integer header {line.strip()!r}") from None
    if count <= 0 or dim <= 0:
        raise MalformedHeader(f"header values must be positive, got {count} {dim}")
    return count, dim


def load_text_embeddings(path: str | Path, name: str | None = None) -> WordEmbeddingModel:
    """Load a word2vec text file.

    Raises MalformedHeader, DimensionMismatch (with the 1-based line number)
    or CountMismatch. Duplicate tokens keep their first occurrence; the
    number of dropped rows is stored in ``duplicate_count``.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline=None) as fh:
        header = fh.readline()
        if not header:
            raise MalformedHeader(f"{path}: empty file")
        count, dim = _parse_header(header)

        index: dict[str, int] = {}
        rows: list[np.ndarray] = []
        n_rows = 0
        duplicates = 0
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.rstrip().split(" ")
            token, values = parts[0], [v for v in parts[1:] if v]
            if len(values) != dim:
                raise DimensionMismatch(
                    f"{path}: token {token!r} has {len(values)} values, expected {dim}",
                    line=lineno,
                )
            try:
                vec = np.array(values, dtype=np.float64)
            except ValueError:
                raise DimensionMismatch(
                    f"{path}: non-numeric value in row for {token!r}", line=lineno
                ) from None
            if not np.isfinite(vec).all():
                raise DimensionMismatch(f"{path}: non-finite value", line=lineno)
            n_rows += 1
            if token in index:
                duplicates += 1
                continue
            index[token] = len(rows)
            rows.append(vec)

    if n_rows != count:
        raise CountMismatch(f"{path}: header declares {count} rows, found {n_rows}")
    if duplicates:
        logger.warning("%s: %d duplicate tokens ignored (first wins)", path, duplicates)
    return WordEmbeddingModel(
        name=name or path.stem,
        dim=dim,
        index=index,
        vectors=np.vstack(rows),
        duplicate_count=duplicates,
    )


def save_text_embeddings(model: WordEmbeddingModel, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(model)} {model.dim}\n")
        for token, row in model.index.items():
            values = " ".join(repr(float(v)) for v in model.vectors[row])
            fh.write(f"{token} {values}\n")


def coverage(model: WordEmbeddingModel, tokens) -> tuple[int, int]:
    """Return ``(token_count, oov_count)`` for a token sequence."""
    tokens = list(tokens)
    oov = sum(1 for t in tokens if t not in model.index)
    return len(tokens), oov

"""Document vectors as averaged word embeddings.

Binary vector file layout (little-endian)::

    b"DVEC" | u32 dim | u32 count | count x (u32 id_len | id bytes | dim x f32)
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embeddings import WordEmbeddingModel
from .errors import DimensionMismatch, MalformedFile, ModelMismatch

_MAGIC = b"DVEC"


@dataclass(frozen=True)
class DocumentVector:
    artifact_id: str
    model_name: str
    vector: np.ndarray
    # None when read back from a vector file, which does not store coverage
    token_count: int | None = None
    oov_count: int | None = None

    def __post_init__(self):
        vec = np.array(self.vector, dtype=np.float64, copy=True)
        if vec.ndim != 1:
            raise DimensionMismatch(f"document vector must be 1-d, got shape {vec.shape}")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)
        if self.token_count is not None:
            if not 0 <= self.oov_count <= self.token_count:
                raise ValueError("need token_count >= oov_count >= 0")

    @property
    def dim(self) -> int:
        return self.vector.shape[0]

    @property
    def coverage(self) -> float | None:
        if self.token_count is None:
            return None
        if self.token_count == 0:
            return 0.0
        return 1.0 - self.oov_count / self.token_count


def embed_document(
    model: WordEmbeddingModel, tokens: Iterable[str], artifact_id: str = ""
) -> DocumentVector:
    """Mean of the embeddings of in-vocabulary tokens, with multiplicity.

    Documents without any in-vocabulary token map to the zero vector.
    """
    tokens = list(tokens)
    rows = [model.index[t] for t in tokens if t in model.index]
    if rows:
        vector = model.vectors[rows].astype(np.float64).mean(axis=0)
    else:
        vector = np.zeros(model.dim)
    return DocumentVector(
        artifact_id, model.name, vector, len(tokens), len(tokens) - len(rows)
    )


def embed_artifacts(
    model: WordEmbeddingModel, artifacts: Sequence, workers: int | None = None
) -> list[DocumentVector]:
    """Embed every artifact (anything with ``id`` and ``tokens``)."""

    def one(art):
        return embed_document(model, art.tokens, art.id)

    if workers == 1 or len(artifacts) < 256:
        return [one(a) for a in artifacts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, artifacts))


def diff_vector(source: DocumentVector, target: DocumentVector) -> np.ndarray:
    """``source.vector - target.vector``; the order is fixed, never symmetrized."""
    if source.model_name != target.model_name:
        raise ModelMismatch(
            f"source uses model {source.model_name!r}, target {target.model_name!r}"
        )
    if source.dim != target.dim:
        raise ModelMismatch(f"dimension {source.dim} != {target.dim}")
    return source.vector - target.vector


def stack(vectors: Sequence[DocumentVector]) -> np.ndarray:
    """Row matrix of document vectors; all must come from the same model."""
    if not vectors:
        raise ValueError("no document vectors")
    names = {v.model_name for v in vectors}
    dims = {v.dim for v in vectors}
    if len(names) > 1 or len(dims) > 1:
        raise ModelMismatch(f"mixed models {sorted(names)} / dims {sorted(dims)}")
    return np.vstack([v.vector for v in vectors])


def save_vectors(vectors: Sequence[DocumentVector], path: str | Path) -> None:
    dim = vectors[0].dim if vectors else 0
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC + struct.pack("<II", dim, len(vectors)))
        for v in vectors:
            if v.dim != dim:
                raise DimensionMismatch(f"{v.artifact_id}: dim {v.dim} != {dim}")
            raw_id = v.artifact_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_id)) + raw_id)
            fh.write(v.vector.astype("<f4").tobytes())


def load_vectors(path: str | Path, model_name: str) -> list[DocumentVector]:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC or len(data) < 12:
        raise MalformedFile(f"{path}: not a DVEC file")
    dim, count = struct.unpack_from("<II", data, 4)
    offset = 12
    out = []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, offset)
            offset += 4
            artifact_id = data[offset:offset + n].decode("utf-8")
            offset += n
            vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
            offset += 4 * dim
            out.append(DocumentVector(artifact_id, model_name, vec))
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise MalformedFile(f"{path}: truncated or corrupt ({exc})") from None
    if offset != len(data):
        raise MalformedFile(f"{path}: {len(data) - offset} trailing bytes")
    return out

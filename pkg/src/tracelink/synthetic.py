"""Synthetic retrieval tasks with a planted, direction-dependent link rule.

Each true target is its source with a fixed set of coordinates negated plus
Gaussian noise, so cosine distance carries no signal while the difference
vector of a linked pair is confined to the negated coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Artifact, Role, TaskDataset, TaskKind
from .docvec import DocumentVector


@dataclass
class PlantedTask:
    dataset: TaskDataset
    sources: list[DocumentVector]
    targets: list[DocumentVector]

    @property
    def vectors(self) -> tuple[dict, dict]:
        return (
            {v.artifact_id: v for v in self.sources},
            {v.artifact_id: v for v in self.targets},
        )


def planted_task(
    n_sources: int = 300,
    n_decoys: int = 300,
    dim: int = 16,
    negate: Sequence[int] | None = None,
    noise: float = 0.05,
    seed: int = 0,
    model_name: str = "planted",
) -> PlantedTask:
    """Build a planted task; ``negate`` defaults to the first half of the coordinates."""
    rng = np.random.default_rng(seed)
    negate = list(range(dim // 2)) if negate is None else list(negate)
    flip = np.ones(dim)
    flip[negate] = -1.0
    X = rng.standard_normal((n_sources, dim))
    T = X * flip + noise * rng.standard_normal((n_sources, dim))
    D = rng.standard_normal((n_decoys, dim))

    src_ids = [f"s{i:04d}" for i in range(n_sources)]
    tgt_ids = [f"t{i:04d}" for i in range(n_sources)] + [f"d{i:04d}" for i in range(n_decoys)]
    # interleave true targets and decoys so column order carries no signal
    order = rng.permutation(len(tgt_ids))
    tgt_ids = [tgt_ids[i] for i in order]
    tgt_matrix = np.vstack([T, D])[order]

    dataset = TaskDataset(
        TaskKind.TRACEABILITY,
        [Artifact(s, Role.SOURCE, "") for s in src_ids],
        [Artifact(t, Role.TARGET, "") for t in tgt_ids],
        [(f"s{i:04d}", f"t{i:04d}") for i in range(n_sources)],
    )
    sources = [DocumentVector(s, model_name, x) for s, x in zip(src_ids, X)]
    targets = [DocumentVector(t, model_name, y) for t, y in zip(tgt_ids, tgt_matrix)]
    return PlantedTask(dataset, sources, targets)

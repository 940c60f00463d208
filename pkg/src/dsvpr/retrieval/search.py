from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from dsvpr.errors import ConfigurationError, DimensionError, ParameterError
from dsvpr.retrieval.db import DescriptorDb


def search_topk(db: DescriptorDb, query, k: int) -> list[tuple[str, float]]:
    """Exact inner-product ranking, descending; equal scores ordered by id."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    q = np.asarray(getattr(query, "values", query), dtype=np.float64).reshape(-1)
    if q.shape[0] != db.dim:
        raise DimensionError(f"query dim {q.shape[0]} != database dim {db.dim}")
    sims = db.matrix.astype(np.float64) @ q
    order = np.lexsort((np.asarray(db.ids), -sims))[: min(k, len(db))]
    return [(db.ids[i], float(sims[i])) for i in order]


@dataclass(frozen=True)
class GroundTruth:
    mode: str
    tolerance: float

    def __post_init__(self):
        if self.mode not in ("geo", "frames"):
            raise ConfigurationError(f"ground-truth mode must be geo or frames, got {self.mode!r}")
        if not self.tolerance >= 0:
            raise ConfigurationError("tolerance must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "GroundTruth":
        """``geo:25`` (meters) or ``frames:2`` (index window)."""
        mode, _, value = text.partition(":")
        try:
            tol = float(value)
        except ValueError:
            raise ConfigurationError(f"bad ground-truth spec {text!r}; expected geo:<m> or frames:<n>") from None
        return cls(mode, tol)

    def __str__(self) -> str:
        return f"{self.mode}:{self.tolerance:g}"


@dataclass
class RecallReport:
    ns: list[int]
    recalls: list[float]
    ground_truth: str
    num_queries: int
    num_database: int

    def as_dict(self) -> dict:
        d = asdict(self)
        d["recall_at"] = {str(n): r for n, r in zip(self.ns, self.recalls)}
        return d

    def __getitem__(self, n: int) -> float:
        return self.recalls[self.ns.index(n)]


def _positives(db: DescriptorDb, queries: DescriptorDb, gt: GroundTruth) -> np.ndarray:
    """(Q, M) boolean matrix of ground-truth matches."""
    if gt.mode == "geo":
        if not (db.has_positions and queries.has_positions):
            raise ConfigurationError("geo ground truth needs positions on every database and query entry")
        dp = np.array(db.positions, dtype=np.float64)
        qp = np.array(queries.positions, dtype=np.float64)
        dist = np.hypot(qp[:, None, 0] - dp[None, :, 0], qp[:, None, 1] - dp[None, :, 1])
        return dist <= gt.tolerance
    if not (db.has_frames and queries.has_frames):
        raise ConfigurationError("frame ground truth needs frame indices on every database and query entry")
    df = np.array(db.frames, dtype=np.int64)
    qf = np.array(queries.frames, dtype=np.int64)
    return np.abs(qf[:, None] - df[None, :]) <= gt.tolerance


def recall_at_n(db: DescriptorDb, queries: DescriptorDb, gt: GroundTruth, ns: Sequence[int] = (1, 5, 10)) -> RecallReport:
    ns = sorted({int(n) for n in ns})
    if not ns or ns[0] < 1:
        raise ParameterError("every N must be >= 1")
    if queries.dim != db.dim:
        raise DimensionError(f"query dim {queries.dim} != database dim {db.dim}")
    pos = _positives(db, queries, gt)
    top = max(ns)
    index = {rid: i for i, rid in enumerate(db.ids)}
    hits_at = np.zeros(len(ns), dtype=np.int64)
    for qi in range(len(queries)):
        ranked = search_topk(db, queries.matrix[qi], top)
        first = next((r for r, (rid, _) in enumerate(ranked) if pos[qi, index[rid]]), math.inf)
        hits_at += np.array([first < n for n in ns])
    return RecallReport(ns, [float(h) / len(queries) for h in hits_at], str(gt), len(queries), len(db))

"""
Fichier: src/analysis/metrics.py
Rangs plein catalogue et métriques Recall@K / NDCG@K (un seul item pertinent).
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np


def rank_of_target(scores: np.ndarray, target: int) -> int:
    """Rang (1 = meilleur) ; les items à égalité avec la cible sont comptés devant elle."""
    scores = np.asarray(scores)
    return int(np.sum(scores >= scores[target]))


def ranks_of_targets(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Version vectorisée de rank_of_target sur un lot (B, |V|)."""
    targets = np.asarray(targets, dtype=np.int64)
    target_scores = scores[np.arange(len(targets)), targets]
    return np.sum(scores >= target_scores[:, None], axis=1).astype(np.int64)


def recall_at_k(ranks: Sequence[int], k: int) -> float:
    ranks = np.asarray(ranks)
    return float(np.mean(ranks <= k)) if ranks.size else 0.0


def ndcg_at_k(ranks: Sequence[int], k: int) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if not ranks.size:
        return 0.0
    gains = np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0)
    return float(np.mean(gains))


@dataclass
class MetricReport:
    split: str
    metrics: Dict[int, Dict[str, float]]
    users: int
    seconds: Optional[float] = None
    peak_memory_bytes: Optional[int] = None
    extra: Dict[str, float] = field(default_factory=dict)

    def recall(self, k: int) -> float:
        return self.metrics[k]["recall"]

    def ndcg(self, k: int) -> float:
        return self.metrics[k]["ndcg"]

    def to_dict(self, include_timing: bool = False) -> dict:
        """Format `{split, K: {recall, ndcg}, users[, seconds]}` avec une vue ×100 sous `percent`."""
        out = {
            "split": self.split,
            "K": {str(k): dict(v) for k, v in sorted(self.metrics.items())},
            "percent": {str(k): {name: round(100.0 * value, 4) for name, value in v.items()}
                        for k, v in sorted(self.metrics.items())},
            "users": self.users,
        }
        if include_timing:
            out["seconds"] = self.seconds
            if self.peak_memory_bytes is not None:
                out["peak_memory_bytes"] = self.peak_memory_bytes
        return out

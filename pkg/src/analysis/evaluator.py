"""
Fichier: src/analysis/evaluator.py
Évaluation plein catalogue (leave-one-out) d'un modèle entraîné.

Ce module gère :
- Le classement de la cible de chaque utilisateur parmi tous les items.
- L'agrégation Recall@K / NDCG@K par utilisateur (pandas).
- L'écriture du rapport JSON.

Version: 1.0
"""

__version__ = "1.0"

import json
import logging
import os
import time
from typing import List, Sequence

import numpy as np
import pandas as pd

from src.analysis.metrics import MetricReport, ndcg_at_k, ranks_of_targets, recall_at_k
from src.data_ingest.corpus import EmptyDatasetError, SplitExample
from src.model.recommender import ComplementaryTransitionRecommender, pad_prefixes

logger = logging.getLogger(__name__)


def user_ranks(model: ComplementaryTransitionRecommender, examples: List[SplitExample],
               batch_size: int = 512, exclude_history: bool = False) -> pd.DataFrame:
    """Rang de la cible pour chaque utilisateur (colonnes `user`, `target`, `rank`)."""
    was_training = model.training
    model.eval()
    try:
        reps = model.item_representations()
        ranks = np.empty(len(examples), dtype=np.int64)
        for start in range(0, len(examples), batch_size):
            chunk = examples[start:start + batch_size]
            batch = pad_prefixes([ex.prefix for ex in chunk], model.config.max_len)
            s = model.encode_sequences(batch, item_reps=reps)
            scores = s.data @ reps.data.T
            targets = np.array([ex.target for ex in chunk], dtype=np.int64)
            if exclude_history:
                for row, ex in enumerate(chunk):
                    seen = [i for i in ex.prefix if i != ex.target]
                    scores[row, seen] = -np.inf
            ranks[start:start + len(chunk)] = ranks_of_targets(scores, targets)
    finally:
        model.training = was_training
    return pd.DataFrame({
        "user": [ex.user_id for ex in examples],
        "target": [ex.target for ex in examples],
        "rank": ranks,
    })


def summarize_ranks(ranks: pd.DataFrame, ks: Sequence[int], split: str) -> MetricReport:
    rank = ranks["rank"].to_numpy(dtype=np.float64)
    metrics = {int(k): {"recall": recall_at_k(rank, k), "ndcg": ndcg_at_k(rank, k)} for k in sorted(ks)}
    return MetricReport(split=split, metrics=metrics, users=len(ranks))


def evaluate(model: ComplementaryTransitionRecommender, examples: List[SplitExample], ks: Sequence[int] = (5, 10, 20),
             split: str = "test", batch_size: int = 512, exclude_history: bool = False) -> MetricReport:
    """Recall@K et NDCG@K moyennés sur les utilisateurs du split."""
    if not examples:
        raise EmptyDatasetError(f"Split '{split}' vide : rien à évaluer.")
    start = time.perf_counter()
    ranks = user_ranks(model, examples, batch_size=batch_size, exclude_history=exclude_history)
    report = summarize_ranks(ranks, ks, split)
    report.seconds = time.perf_counter() - start
    summary = ", ".join(f"R@{k}={v['recall']:.4f} N@{k}={v['ndcg']:.4f}" for k, v in report.metrics.items())
    logger.info(f"Évaluation {split} ({report.users} utilisateurs) : {summary}")
    return report


def write_report(path: str, report: MetricReport, include_timing: bool = False):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(include_timing=include_timing), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Rapport de métriques écrit : {path}")

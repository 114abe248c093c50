"""
Fichier: src/analysis/transition_analysis.py
Distribution des scores de transition : paires complémentaires contre paires
aléatoires, résumés statistiques et histogramme commun.

Version: 1.0
"""

__version__ = "1.0"

import json
import logging
import os
from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np

from src.model.recommender import ComplementaryTransitionRecommender
from src.relations.relation_miner import RelationSet

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 50


@dataclass
class TransitionDistributions:
    comp_scores: np.ndarray
    random_scores: np.ndarray
    bin_edges: np.ndarray
    comp_counts: np.ndarray
    random_counts: np.ndarray

    @property
    def mean_comp(self) -> float:
        return float(self.comp_scores.mean())

    @property
    def mean_random(self) -> float:
        return float(self.random_scores.mean())

    @property
    def std_comp(self) -> float:
        return float(self.comp_scores.std())

    @property
    def std_random(self) -> float:
        return float(self.random_scores.std())

    @property
    def delta(self) -> float:
        return self.mean_comp - self.mean_random

    @property
    def pooled_std(self) -> float:
        return float(np.concatenate([self.comp_scores, self.random_scores]).std())

    def to_dict(self) -> dict:
        return {
            "n_comp": int(self.comp_scores.size),
            "n_random": int(self.random_scores.size),
            "mean_comp": self.mean_comp,
            "mean_random": self.mean_random,
            "std_comp": self.std_comp,
            "std_random": self.std_random,
            "delta": self.delta,
            "pooled_std": self.pooled_std,
            "random_median": float(np.median(self.random_scores)),
            "bin_edges": self.bin_edges.tolist(),
            "comp_counts": self.comp_counts.astype(int).tolist(),
            "random_counts": self.random_counts.astype(int).tolist(),
        }


def sample_random_pairs(num_items: int, n_random: int, excluded: Iterable[Tuple[int, int]],
                        rng: np.random.Generator) -> np.ndarray:
    """Paires (i, j), i ≠ j, tirées uniformément hors de `excluded` (avec remise)."""
    excluded = set(excluded)
    available = num_items * (num_items - 1) - len({p for p in excluded if p[0] != p[1]})
    if available <= 0:
        raise ValueError("Aucune paire aléatoire disponible hors des relations complémentaires.")
    pairs: List[Tuple[int, int]] = []
    while len(pairs) < n_random:
        draw = rng.integers(0, num_items, size=(2 * (n_random - len(pairs)) + 8, 2))
        for i, j in draw:
            pair = (int(i), int(j))
            if i != j and pair not in excluded:
                pairs.append(pair)
                if len(pairs) == n_random:
                    break
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def pair_scores(model: ComplementaryTransitionRecommender, pairs: np.ndarray) -> np.ndarray:
    if len(pairs) == 0:
        return np.zeros(0)
    return model.pair_transition_scores(pairs[:, 0], pairs[:, 1]).numpy().reshape(-1)


def transition_analysis(model: ComplementaryTransitionRecommender, relations: RelationSet, n_random: int = 10000,
                        seed: int = 0, bins: int = HISTOGRAM_BINS) -> TransitionDistributions:
    """
    Scores T(a -> b) de toutes les paires complémentaires et de `n_random` paires
    aléatoires, avec un histogramme à bornes communes.
    """
    if not relations.comp:
        raise ValueError("Relations complémentaires vides : analyse impossible.")
    comp_pairs = np.array(sorted(relations.comp), dtype=np.int64)
    rng = np.random.default_rng(seed)
    random_pairs = sample_random_pairs(model.config.num_items, n_random, relations.comp, rng)

    comp = pair_scores(model, comp_pairs)
    rand = pair_scores(model, random_pairs)
    pooled = np.concatenate([comp, rand])
    low, high = float(pooled.min()), float(pooled.max())
    if high <= low:
        high = low + 1.0
    edges = np.linspace(low, high, bins + 1)
    comp_counts, _ = np.histogram(comp, bins=edges)
    rand_counts, _ = np.histogram(rand, bins=edges)
    result = TransitionDistributions(comp, rand, edges, comp_counts, rand_counts)
    logger.info(f"Transitions : μ_comp={result.mean_comp:.3f} μ_rand={result.mean_random:.3f} "
                f"Δ={result.delta:.3f} ({comp.size} paires complémentaires, {rand.size} aléatoires)")
    return result


def fraction_above_random_median(model: ComplementaryTransitionRecommender, pairs: Iterable[Tuple[int, int]],
                                 distributions: TransitionDistributions) -> float:
    """Part des paires données dont le score dépasse la médiane des paires aléatoires."""
    pairs = np.array(sorted(set(pairs)), dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return 0.0
    median = float(np.median(distributions.random_scores))
    return float(np.mean(pair_scores(model, pairs) > median))


def write_analysis(path: str, distributions: TransitionDistributions):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(distributions.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Analyse des transitions écrite : {path}")

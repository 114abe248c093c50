"""
Fichier: src/training/losses.py
Objectif joint : entropie croisée plein catalogue + cohérence des transitions.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from src.model.recommender import ComplementaryTransitionRecommender
from src.numcore import Tensor, ops

logger = logging.getLogger(__name__)


def ce_loss(s: Tensor, item_reps: Tensor, targets, tau: float) -> Tensor:
    """Moyenne de −log softmax(sᵀh_v / τ)[cible], normalisée sur tous les items."""
    logits = ComplementaryTransitionRecommender.score_candidates(s, item_reps, tau)
    if logits.ndim == 1:
        logits = ops.reshape(logits, (1, logits.shape[0]))
    return ops.cross_entropy_from_logits(logits, np.atleast_1d(targets))


def pairwise_transition_loss(positive: Tensor, negative: Tensor) -> Tensor:
    """Moyenne de −log σ(T(pos) − T(neg))."""
    return -ops.mean(ops.log_sigmoid(positive - negative))


def sample_negatives(targets: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Un négatif par positif, tiré uniformément parmi les cibles du lot
    différentes de la cible courante.

    Returns:
        tuple: (négatifs, masque des lignes ayant un négatif valide)
    """
    targets = np.asarray(targets, dtype=np.int64)
    negatives = np.zeros_like(targets)
    valid = np.zeros(targets.shape, dtype=bool)
    for row, target in enumerate(targets):
        pool = targets[targets != target]
        if pool.size:
            negatives[row] = pool[rng.integers(pool.size)]
            valid[row] = True
    return negatives, valid


def trans_consistency_loss(model: ComplementaryTransitionRecommender, previous: np.ndarray, targets: np.ndarray,
                           negatives: np.ndarray, valid: Optional[np.ndarray] = None) -> Optional[Tensor]:
    """
    L_Trans sur les transitions (v_t -> v_{t+1}) du lot contre les négatifs du lot.
    None (contribution nulle) si moins de deux exemples ou aucun négatif valide.
    """
    previous, targets, negatives = (np.asarray(a, dtype=np.int64) for a in (previous, targets, negatives))
    if len(targets) < 2:
        logger.warning("Lot de moins de deux exemples : contribution de L_Trans nulle.")
        return None
    if valid is not None:
        previous, targets, negatives = previous[valid], targets[valid], negatives[valid]
        if len(targets) == 0:
            logger.debug("Aucun négatif distinct de la cible dans le lot : L_Trans ignorée.")
            return None
    positive = model.pair_transition_scores(previous, targets)
    negative = model.pair_transition_scores(previous, negatives)
    return pairwise_transition_loss(positive, negative)


def total_loss(ce: Tensor, trans: Optional[Tensor], gamma: float) -> Tensor:
    """L = L_CE + γ·L_Trans."""
    if gamma < 0:
        raise ValueError(f"gamma doit être >= 0 (reçu {gamma})")
    if trans is None or gamma == 0.0:
        return ce
    return ce + ops.scale(trans, gamma)

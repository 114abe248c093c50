"""
Fichier: src/model/transition.py
Tenseur de transition sémantique T (D×C×C) : initialisation par les relations
complémentaires, standardisation par sous-espace et score de transition.
"""

import logging
from typing import Dict, Tuple

import numpy as np

from src.numcore import Tensor, ops

logger = logging.getLogger(__name__)

# Écart-type minimal avant qu'une tranche de T soit considérée constante
MIN_STD = 1e-8


def init_transition_prior(
    relations: Dict[Tuple[int, int], float],
    codes: np.ndarray,
    num_subspaces: int,
    codebook_size: int,
    epsilon: float = 1.0,
) -> np.ndarray:
    """
    M_k[c_i^k, c_j^k] += w_ij pour chaque relation, puis M̃_k = (M_k + M_kᵀ)/2
    et T_k = log(M̃_k + ε).
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon doit être > 0 (reçu {epsilon})")
    M = np.zeros((num_subspaces, codebook_size, codebook_size), dtype=np.float64)
    if relations:
        pairs = np.array(sorted(relations), dtype=np.int64)
        weights = np.array([relations[(i, j)] for i, j in map(tuple, pairs)], dtype=np.float64)
        src, dst = codes[pairs[:, 0]], codes[pairs[:, 1]]   # (R, D)
        k_idx = np.broadcast_to(np.arange(num_subspaces), src.shape)
        np.add.at(M, (k_idx, src, dst), weights[:, None])
    symmetric = 0.5 * (M + np.transpose(M, (0, 2, 1)))
    T = np.log(symmetric + epsilon)
    touched = int(np.count_nonzero(symmetric))
    logger.info(f"Prior de transition : {len(relations)} relations, {touched} cellules touchées sur {M.size}.")
    return T


def standardize(transition: Tensor) -> Tensor:
    """P_k = (T_k − moyenne) / écart-type sur les C² cellules ; 0 si T_k est constant."""
    return ops.zscore(transition, axes=(1, 2), min_std=MIN_STD)


def subspace_weights(omega_logits: Tensor) -> Tensor:
    return ops.softmax(omega_logits)


def transition_scores(P: Tensor, omega: Tensor, src_codes: np.ndarray, dst_codes: np.ndarray) -> Tensor:
    """
    T(a -> b) = Σ_k ω_k · P_k[c_a^k, c_b^k] pour des tableaux de codes de forme (..., D)
    diffusables entre eux ; sortie de forme diffusée sans l'axe D.
    """
    D = P.shape[0]
    src_codes, dst_codes = np.broadcast_arrays(np.asarray(src_codes), np.asarray(dst_codes))
    k_idx = np.broadcast_to(np.arange(D), src_codes.shape)
    gathered = ops.slice_(P, (k_idx, src_codes, dst_codes))           # (..., D)
    out_shape = src_codes.shape[:-1]
    flat = ops.reshape(gathered, (-1, D))
    weighted = ops.matmul(flat, ops.reshape(omega, (D, 1)))
    return ops.reshape(weighted, out_shape)


def transition_score(a: int, b: int, codes: np.ndarray, P: np.ndarray, omega: np.ndarray) -> float:
    """Version scalaire (sans gradient) de transition_scores pour une paire d'items."""
    return float(sum(omega[k] * P[k, codes[a, k], codes[b, k]] for k in range(P.shape[0])))

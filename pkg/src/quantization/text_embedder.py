"""
Fichier: src/quantization/text_embedder.py
Embedder textuel déterministe utilisé à la place du modèle de langage.

Chaque texte est haché en graine d'un vecteur gaussien normalisé ; les items
d'un même groupe (bundle planté) partagent une composante commune pondérée
par `group_weight`.
"""

import hashlib
import logging
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def hash_seed(text: str, seed: int = 0) -> int:
    digest = hashlib.sha256(f"{seed}:{text}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _unit_vector(text: str, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(hash_seed(text, seed))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def mock_embed(
    texts: Sequence[str],
    dim: int,
    seed: int = 0,
    groups: Optional[Sequence[Optional[str]]] = None,
    group_weight: float = 0.6,
) -> np.ndarray:
    """
    Embeddings unitaires (len(texts), dim) en float64.

    Args:
        groups: étiquette de groupe par texte (None = pas de composante partagée).
        group_weight: poids de la composante de groupe, dans [0, 1].
    """
    if dim < 1:
        raise ValueError(f"dimension invalide: {dim}")
    out = np.zeros((len(texts), dim), dtype=np.float64)
    for row, text in enumerate(texts):
        v = _unit_vector(text, dim, seed)
        group = groups[row] if groups is not None else None
        if group is not None and group_weight > 0.0:
            shared = _unit_vector(f"group::{group}", dim, seed)
            v = (1.0 - group_weight) * v + group_weight * shared
            v /= np.linalg.norm(v)
        out[row] = v
    logger.debug(f"Embedder mock : {len(texts)} textes, dimension {dim}")
    return out

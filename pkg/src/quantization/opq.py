"""
Fichier: src/quantization/opq.py
Quantification produit optimisée (OPQ) des embeddings textuels.

Ce module gère :
- La réduction ACP des embeddings bruts (convention de signe déterministe).
- Le k-means par sous-espace (initialisation k-means++, ré-amorçage des clusters vides).
- L'optimisation alternée rotation / codebooks (Procrustes orthogonal).
- L'encodage des items en codes sémantiques et la reconstruction.

Version: 1.0
"""

__version__ = "1.0"

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import linalg

from src.quantization.formats import QuantizationError, SemanticCodebook

logger = logging.getLogger(__name__)

# Taille des blocs de lignes pour le calcul exact des distances
_ASSIGN_CHUNK = 4096


def pca_reduce(raw: np.ndarray, d_text: int) -> np.ndarray:
    """
    Projette les embeddings centrés sur les `d_text` premières composantes
    principales (valeurs propres décroissantes). Chaque composante est orientée
    pour que sa coordonnée de plus grande magnitude soit positive.
    """
    raw = np.asarray(raw, dtype=np.float64)
    n, d_raw = raw.shape
    if d_text > d_raw:
        raise QuantizationError(f"d_text={d_text} dépasse la dimension brute {d_raw}")

    centered = raw - raw.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / max(n - 1, 1)
    eigvals, eigvecs = linalg.eigh(cov)
    eigvals, eigvecs = eigvals[::-1], eigvecs[:, ::-1]
    components = eigvecs[:, :d_text].copy()

    for col in range(d_text):
        pivot = np.argmax(np.abs(components[:, col]))
        if components[pivot, col] < 0:
            components[:, col] *= -1.0

    scale = max(float(eigvals[0]), 0.0) if eigvals.size else 0.0
    rank = int(np.sum(eigvals[:d_text] > 1e-10 * scale)) if scale > 0 else 0
    if rank < d_text:
        logger.warning(f"ACP : rang {rank} < d_text={d_text} ; {d_text - rank} composante(s) complétée(s) par des zéros.")
        components[:, rank:] = 0.0

    if scale > 0:
        explained = float(np.clip(eigvals[:d_text], 0, None).sum() / np.clip(eigvals, 0, None).sum())
        logger.info(f"ACP {d_raw} -> {d_text} dimensions, variance expliquée {explained:.1%}")
    return centered @ components


# --- k-means ---

def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # Différences explicites : les égalités exactes restent exactes (règle d'égalité)
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ncd,ncd->nc", diff, diff)


def assign_nearest(points: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Centroïde le plus proche de chaque point (égalité -> indice le plus bas) et distance au carré."""
    codes = np.empty(points.shape[0], dtype=np.int64)
    dists = np.empty(points.shape[0], dtype=np.float64)
    for start in range(0, points.shape[0], _ASSIGN_CHUNK):
        block = _squared_distances(points[start:start + _ASSIGN_CHUNK], centroids)
        idx = np.argmin(block, axis=1)
        codes[start:start + len(idx)] = idx
        dists[start:start + len(idx)] = block[np.arange(len(idx)), idx]
    return codes, dists


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[rng.integers(n)]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            pick = rng.integers(n)
        else:
            pick = rng.choice(n, p=closest / total)
        centroids[c] = points[pick]
        closest = np.minimum(closest, ((points - centroids[c]) ** 2).sum(axis=1))
    return centroids


def kmeans(
    points: np.ndarray,
    k: int,
    iters: int,
    rng: np.random.Generator,
    init: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Lloyd à partir de `init` (ou k-means++). Un cluster vide est ré-amorcé sur le
    point de plus grande erreur de quantification.

    Returns:
        tuple: (centroïdes (k, d), codes (n,), erreur totale)
    """
    centroids = kmeans_plus_plus(points, k, rng) if init is None else init.copy()
    codes, dists = assign_nearest(points, centroids)
    for _ in range(iters):
        counts = np.bincount(codes, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, codes, points)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]

        # Erreurs après mise à jour des moyennes
        dists = ((points - centroids[codes]) ** 2).sum(axis=1)
        empty = np.flatnonzero(~filled)
        if empty.size:
            logger.debug(f"k-means : {empty.size} cluster(s) vide(s) ré-amorcé(s)")
        for c in empty:
            worst = int(np.argmax(dists))
            centroids[c] = points[worst]
            codes[worst] = c
            dists[worst] = 0.0

        new_codes, new_dists = assign_nearest(points, centroids)
        if np.array_equal(new_codes, codes):
            break
        codes, dists = new_codes, new_dists
    return centroids, codes, float(dists.sum())


# --- OPQ ---

def _split(rotated: np.ndarray, num_subspaces: int) -> List[np.ndarray]:
    return np.split(rotated, num_subspaces, axis=1)


def train_opq(
    embeddings: np.ndarray,
    num_subspaces: int,
    codebook_size: int,
    iters: int = 20,
    seed: int = 0,
    kmeans_iters: int = 25,
    tol: float = 1e-5,
    update_rotation: bool = True,
    on_iteration: Optional[Callable[[int, np.ndarray, float], None]] = None,
) -> SemanticCodebook:
    """
    Optimisation alternée : (a) rotation fixée, k-means par sous-espace sur les
    sous-vecteurs tournés ; (b) codes fixés, rotation mise à jour par Procrustes
    (SVD de Xᵀ·Y, R = U·Wᵀ). L'erreur totale ne croît jamais d'une itération à l'autre.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    n, d_text = X.shape
    if d_text % num_subspaces != 0:
        raise QuantizationError(f"d_text={d_text} n'est pas divisible par D={num_subspaces}")
    if n < codebook_size:
        raise QuantizationError(f"{n} items pour C={codebook_size} centroïdes : |V| >= C requis")
    if iters < 1:
        raise QuantizationError(f"iters doit être >= 1 (reçu {iters})")

    rng = np.random.default_rng(seed)
    rotation = np.eye(d_text)
    centroids: List[Optional[np.ndarray]] = [None] * num_subspaces
    codes = np.zeros((n, num_subspaces), dtype=np.int64)
    history: List[float] = []

    for iteration in range(iters):
        rotated = X @ rotation
        error = 0.0
        for k, sub in enumerate(_split(rotated, num_subspaces)):
            centroids[k], codes[:, k], sub_error = kmeans(sub, codebook_size, kmeans_iters, rng, init=centroids[k])
            error += sub_error
        history.append(error)
        if on_iteration is not None:
            on_iteration(iteration, rotation, error)
        logger.debug(f"OPQ itération {iteration + 1}/{iters} : erreur {error:.6f}")

        if len(history) > 1:
            previous = history[-2]
            if previous <= 0.0 or (previous - error) / previous < tol:
                break
        if error <= 0.0:
            break
        # Dernière itération : la rotation reste celle des codebooks appris
        if not update_rotation or iteration == iters - 1:
            continue

        target = np.hstack([centroids[k][codes[:, k]] for k in range(num_subspaces)])
        try:
            U, _, Wt = linalg.svd(X.T @ target)
        except (linalg.LinAlgError, ValueError) as e:
            logger.warning(f"OPQ : SVD non convergente ({e}) ; rotation précédente conservée.")
            break
        rotation = U @ Wt

    logger.info(f"OPQ entraîné : D={num_subspaces}, C={codebook_size}, {len(history)} itération(s), erreur finale {history[-1]:.6f}")
    return SemanticCodebook(rotation=rotation, codebooks=[c.copy() for c in centroids], error_history=history)


def encode(embeddings: np.ndarray, codebook: SemanticCodebook) -> np.ndarray:
    """Codes |V|×D : centroïde le plus proche par sous-espace, égalité -> indice le plus bas."""
    rotated = np.asarray(embeddings, dtype=np.float64) @ codebook.rotation
    subs = _split(rotated, codebook.num_subspaces)
    codes = np.empty((rotated.shape[0], codebook.num_subspaces), dtype=np.int64)
    for k, sub in enumerate(subs):
        codes[:, k], _ = assign_nearest(sub, codebook.codebooks[k])
    return codes


def reconstruct(codes: np.ndarray, codebook: SemanticCodebook) -> np.ndarray:
    """Reconstruction dans l'espace d'origine (rotation inverse appliquée)."""
    rotated = np.hstack([codebook.codebooks[k][codes[:, k]] for k in range(codebook.num_subspaces)])
    return rotated @ codebook.rotation.T


def quantization_error(embeddings: np.ndarray, codes: np.ndarray, codebook: SemanticCodebook) -> float:
    diff = np.asarray(embeddings, dtype=np.float64) - reconstruct(codes, codebook)
    return float((diff ** 2).sum())

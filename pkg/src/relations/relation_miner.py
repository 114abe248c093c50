"""
Fichier: src/relations/relation_miner.py
Construction de l'ensemble pondéré de relations complémentaires R_c.

Étapes : co-achats (fenêtre w) -> candidats (theta_f) -> score de
complémentarité (theta_c) -> paires substituables par similarité cosinus
(theta_s) -> expansion transitive -> symétrisation.

Version: 1.0
"""

__version__ = "1.0"

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from src.data_ingest.corpus import CorpusFormatError, Item
from src.relations.cooccurrence import candidate_pairs, count_copurchases, touched_items
from src.relations.scorers import ScorerBackend, score_pairs

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]


@dataclass
class RelationSet:
    comp: Dict[Pair, float] = field(default_factory=dict)   # (i, j) -> w_ij, symétrique
    subst: Set[Pair] = field(default_factory=set)           # paires non ordonnées (i < j)
    stats: Dict[str, int] = field(default_factory=dict)

    def triples(self) -> List[Tuple[int, int, float]]:
        return [(i, j, w) for (i, j), w in sorted(self.comp.items())]

    def __len__(self):
        return len(self.comp)


def _put_max(store: Dict[Pair, float], pair: Pair, w: float):
    if pair[0] == pair[1]:
        return
    if w > store.get(pair, -1.0):
        store[pair] = w


def build_substitutable(embeddings: np.ndarray, theta_s: float, scope: Optional[Sequence[int]] = None) -> Set[Pair]:
    """
    Paires non ordonnées de similarité cosinus >= theta_s. Avec `scope`, seules
    les paires ayant au moins une extrémité dans `scope` sont examinées.
    Un embedding de norme nulle a une similarité 0 avec tout item.
    """
    if not 0.0 < theta_s <= 1.0:
        raise ValueError(f"theta_s doit être dans (0, 1] (reçu {theta_s})")
    X = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    unit = np.divide(X, norms[:, None], out=np.zeros_like(X), where=norms[:, None] > 0)
    rows = np.arange(X.shape[0]) if scope is None else np.asarray(sorted(scope), dtype=np.int64)

    pairs: Set[Pair] = set()
    for start in range(0, len(rows), 1024):
        block = rows[start:start + 1024]
        sims = unit[block] @ unit.T
        hit_rows, hit_cols = np.nonzero(sims >= theta_s)
        for r, k in zip(hit_rows, hit_cols):
            i, k = int(block[r]), int(k)
            if i != k:
                pairs.add((min(i, k), max(i, k)))
    return pairs


def expand_relations(comp: Dict[Pair, float], subst: Set[Pair]) -> Dict[Pair, float]:
    """
    Une passe sur R_c : (i, j, w) et (i, k) substituables => (k, j, w) ajouté,
    puis symétrisation. En cas de collision, le poids maximal est conservé.
    """
    neighbors: Dict[int, List[int]] = {}
    for a, b in sorted(subst):
        neighbors.setdefault(a, []).append(b)
        neighbors.setdefault(b, []).append(a)

    expanded: Dict[Pair, float] = {}
    for (i, j), w in sorted(comp.items()):
        _put_max(expanded, (i, j), w)
        for k in neighbors.get(i, ()):
            _put_max(expanded, (k, j), w)

    symmetric: Dict[Pair, float] = {}
    for (i, j), w in expanded.items():
        _put_max(symmetric, (i, j), w)
        _put_max(symmetric, (j, i), w)
    return symmetric


def mine_relations(
    sequences: Sequence[Sequence[int]],
    items: List[Item],
    embeddings: np.ndarray,
    backend: ScorerBackend,
    window: int = 3,
    theta_f: int = 2,
    theta_c: float = 0.5,
    theta_s: float = 0.85,
    max_in_flight: int = 1,
    full_scan: bool = False,
) -> RelationSet:
    """
    Pipeline complet de construction de R_c.

    Args:
        sequences: séquences d'entraînement (indices internes).
        items: items indexés par indice interne.
        embeddings: embeddings textuels, une ligne par item.
        full_scan: si True, R_s est calculé sur toutes les paires d'items.
    """
    if embeddings.shape[0] != len(items):
        raise ValueError(f"{embeddings.shape[0]} embeddings pour {len(items)} items")

    counts = count_copurchases(sequences, window, workers=max(1, max_in_flight))
    candidates = candidate_pairs(counts, theta_f)
    scores = score_pairs(backend, candidates, items, max_in_flight=max_in_flight)
    comp = {pair: w for pair, w in scores.items() if w >= theta_c}

    scope = None if full_scan else touched_items(candidates)
    subst = build_substitutable(embeddings, theta_s, scope=scope)
    final = expand_relations(comp, subst)

    stats = {
        "copurchase_pairs": len(counts),
        "candidates": len(candidates),
        "scored": len(scores),
        "kept": len(comp),
        "substitutable": len(subst),
        "final": len(final),
    }
    logger.info(
        f"Relations : {stats['candidates']} candidats, {stats['kept']} retenus (theta_c={theta_c}), "
        f"{stats['substitutable']} paires substituables, {stats['final']} relations finales (symétriques)."
    )
    return RelationSet(comp=final, subst=subst, stats=stats)


# --- Persistance JSON Lines ---

def write_relations(path: str, relations: RelationSet, item_ids: List[str]):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for i, j, w in relations.triples():
            f.write(json.dumps({"i": item_ids[i], "j": item_ids[j], "w": w}) + "\n")
    logger.info(f"{len(relations)} relations écrites dans {path}")


def read_relations(path: str, item_ids: List[str]) -> RelationSet:
    """Relit R_c ; les paires mentionnant un item inconnu sont ignorées."""
    index_of = {item_id: idx for idx, item_id in enumerate(item_ids)}
    comp: Dict[Pair, float] = {}
    unknown = 0
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                a, b, w = str(obj["i"]), str(obj["j"]), float(obj["w"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise CorpusFormatError(path, line_number, f"relation invalide ({e})") from None
            if a not in index_of or b not in index_of:
                unknown += 1
                continue
            _put_max(comp, (index_of[a], index_of[b]), w)
    if unknown:
        logger.warning(f"{unknown} relation(s) ignorée(s) dans {path} : item inconnu.")
    return RelationSet(comp=comp)

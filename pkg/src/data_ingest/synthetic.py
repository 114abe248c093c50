"""
Fichier: src/data_ingest/synthetic.py
Générateur de corpus synthétique à bundles complémentaires plantés.

Les items sont répartis en G bundles ; chaque séquence est une marche
aléatoire qui, avec probabilité p_bundle, passe à un autre item du bundle
courant, et sinon à un item uniforme. Le dernier tag de catégorie d'un item
est son bundle (`bundle-007`), ce que le scoreur mock sait reconnaître.
"""

import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from src.quantization.formats import write_embeddings
from src.quantization.text_embedder import mock_embed

logger = logging.getLogger(__name__)

_DEPARTMENTS = ("Kitchen", "Outdoors", "Office", "Garden", "Audio", "Sports", "Toys", "Beauty")
_BRANDS = ("Acme", "Borealis", "Cobalt", "Dune", "Ember", "Fjord")
_BASE_TIMESTAMP = 1_600_000_000


@dataclass
class SyntheticCorpus:
    items: List[Dict]                       # objets JSON Lines {item_id, title, categories, brand}
    interactions: List[Tuple[str, str, int]]
    bundles: List[List[str]]                # item_id par bundle planté
    embeddings: np.ndarray                  # (|V|, raw_dim), ordre de `items`

    def bundle_pairs(self) -> List[Tuple[str, str]]:
        """Paires non ordonnées d'items distincts d'un même bundle."""
        pairs = []
        for members in self.bundles:
            for a in range(len(members)):
                for b in range(a + 1, len(members)):
                    pairs.append((members[a], members[b]))
        return pairs


def bundle_tag(index: int) -> str:
    return f"bundle-{index:03d}"


def generate_corpus(settings: dict, seed: int) -> SyntheticCorpus:
    """
    Args:
        settings: section `synthetic` de la configuration.
        seed: graine du run.
    """
    rng = np.random.default_rng(seed)
    n_items, n_bundles = settings["num_items"], settings["num_bundles"]
    if n_bundles > n_items:
        raise ValueError(f"{n_bundles} bundles pour {n_items} items")

    bundle_of = np.arange(n_items) % n_bundles
    rng.shuffle(bundle_of)
    item_ids = [f"I{i:05d}" for i in range(n_items)]
    items = []
    for i, item_id in enumerate(item_ids):
        b = int(bundle_of[i])
        items.append({
            "item_id": item_id,
            "title": f"Product {i}",
            "categories": [_DEPARTMENTS[b % len(_DEPARTMENTS)], bundle_tag(b)],
            "brand": _BRANDS[i % len(_BRANDS)],
        })
    members = [np.flatnonzero(bundle_of == b) for b in range(n_bundles)]

    interactions = []
    for u in range(settings["num_users"]):
        user_id = f"U{u:06d}"
        length = int(rng.integers(settings["min_len"], settings["max_len"] + 1))
        current = int(rng.integers(n_items))
        t = _BASE_TIMESTAMP + int(rng.integers(0, 86_400 * 365))
        for _ in range(length):
            interactions.append((user_id, item_ids[current], t))
            t += int(rng.integers(60, 86_400))
            peers = members[bundle_of[current]]
            if rng.random() < settings["p_bundle"] and len(peers) > 1:
                others = peers[peers != current]
                current = int(others[rng.integers(len(others))])
            else:
                current = int(rng.integers(n_items))

    texts = [f"{it['title']}. {', '.join(it['categories'])}. {it['brand']}." for it in items]
    embeddings = mock_embed(texts, settings["raw_dim"], seed=seed,
                            groups=[bundle_tag(int(b)) for b in bundle_of],
                            group_weight=settings["bundle_weight"])
    bundles = [[item_ids[i] for i in m] for m in members]
    logger.info(f"Corpus synthétique : {n_items} items, {n_bundles} bundles, "
                f"{settings['num_users']} utilisateurs, {len(interactions)} interactions.")
    return SyntheticCorpus(items=items, interactions=interactions, bundles=bundles, embeddings=embeddings)


def write_corpus(corpus: SyntheticCorpus, interactions_path: str, items_path: str, embeddings_path: str):
    """Écrit les trois fichiers d'entrée du pipeline (TSV, JSON Lines, EMB1)."""
    for path in (interactions_path, items_path, embeddings_path):
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(interactions_path, "w", encoding="utf-8") as f:
        for user_id, item_id, ts in corpus.interactions:
            f.write(f"{user_id}\t{item_id}\t{ts}\n")
    with open(items_path, "w", encoding="utf-8") as f:
        for item in corpus.items:
            f.write(json.dumps(item, ensure_ascii=False) + "\n")
    write_embeddings(embeddings_path, corpus.embeddings)
    logger.info(f"Corpus synthétique écrit : {interactions_path}, {items_path}, {embeddings_path}")

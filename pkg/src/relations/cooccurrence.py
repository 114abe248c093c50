"""
Fichier: src/relations/cooccurrence.py
Comptage des co-achats par fenêtre glissante et sélection des candidats.
"""

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Sequence, Set, Tuple

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]

# Nombre de séquences par tranche de comptage
_SHARD_SIZE = 2048


def _count_shard(sequences: Sequence[Sequence[int]], window: int) -> Counter:
    counts: Counter = Counter()
    for seq in sequences:
        n = len(seq)
        for i in range(n):
            for j in range(i + 1, min(i + window, n)):
                counts[(seq[i], seq[j])] += 1
    return counts


def count_copurchases(sequences: Sequence[Sequence[int]], window: int, workers: int = 1) -> Dict[Pair, int]:
    """
    freq(v_i, v_j) += 1 pour chaque couple de positions i < j avec j − i < window.
    Les paires sont orientées (antérieur, postérieur) ; un item répété compte
    à chaque occurrence.
    """
    if window < 2:
        raise ValueError(f"La fenêtre doit être >= 2 (reçu {window})")
    shards = [sequences[s:s + _SHARD_SIZE] for s in range(0, len(sequences), _SHARD_SIZE)]
    total: Counter = Counter()
    if workers > 1 and len(shards) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for partial in pool.map(lambda shard: _count_shard(shard, window), shards):
                total.update(partial)
    else:
        for shard in shards:
            total.update(_count_shard(shard, window))
    logger.debug(f"Co-achats : {len(total)} paires orientées sur {len(sequences)} séquences (w={window})")
    return dict(total)


def candidate_pairs(counts: Dict[Pair, int], theta_f: int) -> Set[Pair]:
    """R_c^0 : paires de fréquence >= theta_f, auto-paires exclues."""
    if theta_f < 1:
        raise ValueError(f"theta_f doit être >= 1 (reçu {theta_f})")
    return {pair for pair, count in counts.items() if count >= theta_f and pair[0] != pair[1]}


def touched_items(pairs) -> List[int]:
    return sorted({i for pair in pairs for i in pair[:2]})

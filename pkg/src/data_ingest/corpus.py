"""
Fichier: src/data_ingest/corpus.py
Module d'ingestion du corpus d'interactions.

Ce module gère :
- La lecture des interactions (TSV) et des métadonnées d'items (JSON Lines).
- Le filtrage k-core itératif et la renumérotation dense des items.
- La construction du texte de chaque item (titre, catégories, marque).
- Le découpage leave-one-out (train / valid / test).

Version: 1.0
"""

__version__ = "1.0"

import csv
import json
import logging
import os
import re
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import pandas as pd

logger = logging.getLogger(__name__)


class CorpusFormatError(ValueError):
    """Ligne mal formée dans un fichier d'entrée."""

    def __init__(self, path: str, line_number: int, reason: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}, ligne {line_number}: {reason}")


class EmptyDatasetError(ValueError):
    """Le filtrage a supprimé toutes les interactions."""


@dataclass
class Item:
    item_id: str
    internal_index: int = -1
    title: str = ""
    categories: List[str] = field(default_factory=list)
    brand: str = ""
    # Ligne de l'item dans le fichier de métadonnées (alignement des embeddings bruts)
    source_row: Optional[int] = None


@dataclass
class RawSequence:
    user_id: str
    item_ids: List[str]
    timestamps: List[int]


@dataclass
class InteractionSequence:
    user_id: str
    items: List[int]
    timestamps: Optional[List[int]] = None


@dataclass
class SplitExample:
    user_id: str
    prefix: List[int]
    target: int


@dataclass
class DatasetSplits:
    train: List[InteractionSequence]
    valid: List[SplitExample]
    test: List[SplitExample]
    max_len: int
    rejected: int = 0


# --- Lecture des fichiers ---

INTERACTION_COLUMNS = ["user_id", "item_id", "timestamp"]


def _read_interactions(path: str) -> pd.DataFrame:
    # Colonne sentinelle : une 4e colonne remplie signale une ligne trop large
    columns = INTERACTION_COLUMNS + ["extra"]
    try:
        raw = pd.read_csv(path, sep="\t", header=None, names=columns, dtype=str, keep_default_na=False,
                          skip_blank_lines=False, quoting=csv.QUOTE_NONE, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=INTERACTION_COLUMNS + ["line"])
    except pd.errors.ParserError as e:
        # Tokenizer C : "Expected 4 fields in line N, saw M"
        match = re.search(r"line (\d+), saw (\d+)", str(e))
        if match is None:
            raise CorpusFormatError(path, 0, str(e)) from None
        raise CorpusFormatError(path, int(match.group(1)), f"3 colonnes attendues, {match.group(2)} trouvées") from None

    lines = pd.Series(raw.index + 1, index=raw.index)
    widths = raw.notna().sum(axis=1)
    fields = raw.fillna("").apply(lambda col: col.str.strip())
    keep = fields.ne("").any(axis=1)
    fields, widths, lines = fields[keep], widths[keep], lines[keep]

    bad_width = widths != len(INTERACTION_COLUMNS)
    empty_id = fields["user_id"].eq("") | fields["item_id"].eq("")
    bad_timestamp = ~fields["timestamp"].str.fullmatch(r"[+-]?\d+").astype(bool)
    problems = bad_width | empty_id | bad_timestamp
    if problems.any():
        first = problems.idxmax()
        if bad_width[first]:
            reason = f"3 colonnes attendues, {int(widths[first])} trouvées"
        elif empty_id[first]:
            reason = "user_id ou item_id vide"
        else:
            reason = f"timestamp non entier {fields.at[first, 'timestamp']!r}"
        raise CorpusFormatError(path, int(lines[first]), reason)

    df = fields[INTERACTION_COLUMNS].copy()
    df["timestamp"] = df["timestamp"].astype("int64")
    df["line"] = lines
    return df.reset_index(drop=True)


def _read_items(path: str) -> Dict[str, Item]:
    items: Dict[str, Item] = {}
    duplicates = 0
    with open(path, "r", encoding="utf-8") as f:
        row = 0
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(path, line_number, f"JSON invalide ({e.msg})") from None
            if not isinstance(obj, dict) or not obj.get("item_id"):
                raise CorpusFormatError(path, line_number, "objet sans 'item_id'")
            item_id = str(obj["item_id"])
            if item_id in items:
                duplicates += 1
                row += 1
                continue
            categories = obj.get("categories") or []
            if isinstance(categories, str):
                categories = [categories]
            items[item_id] = Item(
                item_id=item_id,
                title=str(obj.get("title") or ""),
                categories=[str(c) for c in categories],
                brand=str(obj.get("brand") or ""),
                source_row=row,
            )
            row += 1
    if duplicates:
        logger.warning(f"{duplicates} item(s) en double dans {path} ; la première occurrence est conservée.")
    return items


def load_corpus(interactions_path: str, items_path: str) -> Tuple[List[RawSequence], Dict[str, Item]]:
    """
    Charge les interactions et les métadonnées.

    Returns:
        tuple: (séquences brutes, une par utilisateur, triées par timestamp
               de façon stable ; items indexés par item_id)
    """
    for path in (interactions_path, items_path):
        if not os.path.exists(path):
            raise FileNotFoundError(f"Fichier introuvable: {path}")

    df = _read_interactions(interactions_path)
    items = _read_items(items_path)

    sequences: List[RawSequence] = []
    if not df.empty:
        for user_id, group in df.groupby("user_id", sort=False):
            group = group.sort_values("timestamp", kind="mergesort")
            sequences.append(RawSequence(str(user_id), group["item_id"].tolist(), group["timestamp"].astype(int).tolist()))

    missing = 0
    for item_id in (df["item_id"].unique() if not df.empty else []):
        if item_id not in items:
            items[item_id] = Item(item_id=item_id)
            missing += 1
    if missing:
        logger.warning(f"{missing} item(s) référencé(s) sans métadonnées : conservés avec des champs texte vides.")

    logger.info(f"Corpus chargé : {len(sequences)} utilisateurs, {len(df)} interactions, {len(items)} items.")
    return sequences, items


# --- Filtrage k-core ---

def k_core_filter(sequences: List[RawSequence], k: int) -> Tuple[List[InteractionSequence], List[str]]:
    """
    Supprime itérativement les utilisateurs et les items ayant moins de `k`
    interactions jusqu'au point fixe, puis renumérote les items (ordre des item_id).

    Returns:
        tuple: (séquences en indices internes, liste index -> item_id)
    """
    if k < 1:
        raise ValueError(f"k doit être >= 1 (reçu {k})")

    df = pd.DataFrame(
        [(s.user_id, item, ts) for s in sequences for item, ts in zip(s.item_ids, s.timestamps)],
        columns=["user_id", "item_id", "timestamp"],
    )
    passes = 0
    while True:
        passes += 1
        size = len(df)
        item_counts = df["item_id"].value_counts()
        df = df[df["item_id"].isin(item_counts[item_counts >= k].index)]
        user_counts = df["user_id"].value_counts()
        df = df[df["user_id"].isin(user_counts[user_counts >= k].index)]
        if len(df) == size:
            break

    if df.empty:
        raise EmptyDatasetError(f"Le filtrage {k}-core a supprimé toutes les interactions.")

    item_ids = sorted(df["item_id"].unique().tolist())
    df = df.assign(internal=pd.Categorical(df["item_id"], categories=item_ids).codes)
    # L'ordre des lignes (utilisateurs puis positions) est celui de l'entrée
    result = [
        InteractionSequence(str(user), group["internal"].astype(int).tolist(), group["timestamp"].astype(int).tolist())
        for user, group in df.groupby("user_id", sort=False)
    ]
    logger.info(f"Filtrage {k}-core ({passes} passes) : {len(result)} utilisateurs, {len(item_ids)} items, {len(df)} interactions.")
    return result, item_ids


# --- Texte des items ---

def build_text_feature(item: Item) -> str:
    """Texte "titre. catégories. marque." ; champs vides ignorés, repli sur item_id."""
    parts = []
    title = item.title.strip().rstrip(".")
    if title:
        parts.append(f"{title}.")
    categories = ", ".join(c.strip() for c in item.categories if c and c.strip())
    if categories:
        parts.append(f"{categories.rstrip('.')}.")
    brand = item.brand.strip().rstrip(".")
    if brand:
        parts.append(f"{brand}.")
    return " ".join(parts) if parts else item.item_id


# --- Découpage leave-one-out ---

def split_leave_one_out(sequences: List[InteractionSequence], max_len: int) -> DatasetSplits:
    """
    Dernier item -> test, avant-dernier -> validation, le reste -> entraînement.
    Les préfixes sont tronqués aux `max_len` items les plus récents.
    """
    train, valid, test = [], [], []
    rejected = 0
    for seq in sequences:
        items = seq.items
        if len(items) < 3:
            rejected += 1
            continue
        train.append(InteractionSequence(seq.user_id, items[:-2], (seq.timestamps or [])[:-2] or None))
        valid.append(SplitExample(seq.user_id, items[:-2][-max_len:], items[-2]))
        test.append(SplitExample(seq.user_id, items[:-1][-max_len:], items[-1]))
    if rejected:
        logger.warning(f"{rejected} séquence(s) de longueur < 3 rejetée(s) du découpage leave-one-out.")
    return DatasetSplits(train=train, valid=valid, test=test, max_len=max_len, rejected=rejected)


def dataset_statistics(sequences: List[InteractionSequence], num_items: int) -> Dict[str, float]:
    """Utilisateurs, items, interactions, sparsité et longueur moyenne."""
    n_users = len(sequences)
    n_inter = sum(len(s.items) for s in sequences)
    density = n_inter / (n_users * num_items) if n_users and num_items else 0.0
    return {
        "users": n_users,
        "items": num_items,
        "interactions": n_inter,
        "sparsity": 1.0 - density,
        "avg_len": n_inter / n_users if n_users else 0.0,
    }


# --- Persistance ---

def save_dataset(path: str, items: List[Item], sequences: List[InteractionSequence], max_len: int):
    """Écrit le jeu filtré (items dans l'ordre des indices internes)."""
    payload = {
        "max_len": max_len,
        "items": [asdict(item) for item in items],
        "sequences": [asdict(seq) for seq in sequences],
    }
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, sort_keys=True)


def load_dataset(path: str) -> Tuple[List[Item], List[InteractionSequence], int]:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    items = [Item(**obj) for obj in payload["items"]]
    sequences = [InteractionSequence(**obj) for obj in payload["sequences"]]
    return items, sequences, int(payload["max_len"])


def write_splits(splits: DatasetSplits, item_ids: List[str], path_template: str):
    """Exporte valid/test en JSON Lines `{user, prefix, target}` (item_id) pour inspection."""
    for name, examples in (("valid", splits.valid), ("test", splits.test)):
        path = path_template.format(split=name)
        with open(path, "w", encoding="utf-8") as f:
            for ex in examples:
                record = {"user": ex.user_id, "prefix": [item_ids[i] for i in ex.prefix], "target": item_ids[ex.target]}
                f.write(json.dumps(record, ensure_ascii=False) + "\n")
        logger.info(f"Split {name} exporté : {len(examples)} utilisateurs -> {path}")

"""
Fichier: src/pipeline/artifacts.py
Chemins des artefacts d'un run, préconditions et fichiers compagnons
`<sortie>.meta.json` (empreintes des entrées, graine, hash de config).

Version: 1.0
"""

__version__ = "1.0"

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

from src import shared_state
from src.constants import (
    ARTIFACT_CODEBOOK,
    ARTIFACT_DATASET,
    ARTIFACT_DATASET_STATS,
    ARTIFACT_METRICS,
    ARTIFACT_SPLITS,
    ARTIFACT_TEXT_EMBEDDINGS,
    ARTIFACT_TRAIN_LOG,
    ARTIFACT_TRANSITIONS,
    META_SUFFIX,
)
from src.settings import config_hash

logger = logging.getLogger(__name__)


class MissingArtifactError(FileNotFoundError):
    """Artefact amont absent ; `producer` est la sous-commande qui le génère."""

    def __init__(self, path: str, producer: str):
        self.path = path
        self.producer = producer
        super().__init__(f"Artefact manquant: {path} (lancez d'abord la sous-commande `{producer}`)")


@dataclass
class RunPaths:
    """Emplacements des artefacts ; ceux du modèle peuvent vivre dans un sous-dossier (ablations, sweep)."""

    interactions: str
    items: str
    raw_embeddings: str
    scores: str
    out_dir: str
    dataset: str
    dataset_stats: str
    splits_template: str
    text_embeddings: str
    codebook: str
    codes: str
    relations: str
    model_dir: str
    checkpoint: str
    train_log: str
    reports: str

    @classmethod
    def from_config(cls, config: dict, model_subdir: Optional[str] = None) -> "RunPaths":
        p = config["paths"]
        out = p["out_dir"]
        model_dir = os.path.join(out, model_subdir) if model_subdir else out
        return cls(
            interactions=p["interactions"],
            items=p["items"],
            raw_embeddings=p["embeddings"],
            scores=p["scores"],
            out_dir=out,
            dataset=os.path.join(out, ARTIFACT_DATASET),
            dataset_stats=os.path.join(out, ARTIFACT_DATASET_STATS),
            splits_template=os.path.join(out, ARTIFACT_SPLITS),
            text_embeddings=os.path.join(out, ARTIFACT_TEXT_EMBEDDINGS),
            codebook=os.path.join(out, ARTIFACT_CODEBOOK),
            codes=os.path.join(out, p["codes"]),
            relations=os.path.join(out, p["relations"]),
            model_dir=model_dir,
            checkpoint=os.path.join(model_dir, p["checkpoints"]),
            train_log=os.path.join(model_dir, ARTIFACT_TRAIN_LOG),
            reports=os.path.join(model_dir, p["reports"]),
        )

    def metrics(self, split: str) -> str:
        return os.path.join(self.reports, ARTIFACT_METRICS.format(split=split))

    @property
    def transitions(self) -> str:
        return os.path.join(self.reports, ARTIFACT_TRANSITIONS)


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def require(path: str, producer: str):
    if not os.path.exists(path):
        raise MissingArtifactError(path, producer)
    stale = stale_inputs(path)
    if stale:
        logger.warning(f"{path} semble périmé : entrées modifiées depuis sa production ({', '.join(stale)}).")


def meta_path(output: str) -> str:
    return output + META_SUFFIX


def write_meta(output: str, stage: str, config: dict, inputs: Iterable[str], extra: Optional[Dict] = None):
    """Écrit le compagnon `<output>.meta.json` et référence l'artefact dans l'état partagé."""
    meta = {
        "stage": stage,
        "seed": config["seed"],
        "config_hash": config_hash(config),
        "inputs": {path: file_sha256(path) for path in sorted(set(inputs)) if os.path.exists(path)},
        "output_sha256": file_sha256(output) if os.path.isfile(output) else None,
    }
    if extra:
        meta.update(extra)
    with open(meta_path(output), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    shared_state.record_artifact(os.path.basename(output), output)


def read_meta(output: str) -> Optional[dict]:
    path = meta_path(output)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def stale_inputs(output: str) -> list:
    """Entrées dont l'empreinte diffère de celle enregistrée à la production de `output`."""
    meta = read_meta(output)
    if not meta:
        return []
    stale = []
    for path, digest in meta.get("inputs", {}).items():
        if not os.path.exists(path) or file_sha256(path) != digest:
            stale.append(path)
    return stale

"""
Fichier: src/model/checkpoint.py
Sauvegarde binaire des paramètres du modèle.

Format little-endian : magic "CAST", u32 version, u32 longueur de l'en-tête,
en-tête JSON (configuration, noms et formes des paramètres, métadonnées),
puis les paramètres en f32 dans l'ordre déclaré.
"""

import json
import logging
import os
import struct
from collections import OrderedDict
from typing import Dict, Tuple

import numpy as np

from src.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION

logger = logging.getLogger(__name__)


class CheckpointError(ValueError):
    """Fichier de checkpoint invalide ou incompatible."""


def save_checkpoint(path: str, state: Dict[str, np.ndarray], model_config: dict, metadata: dict = None):
    names = list(state.keys())
    header = {
        "config": model_config,
        "params": [{"name": n, "shape": list(state[n].shape)} for n in names],
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for name in names:
            f.write(np.ascontiguousarray(state[name], dtype="<f4").tobytes())
    logger.info(f"Checkpoint écrit : {path} ({len(names)} tenseurs)")


def load_checkpoint(path: str) -> Tuple["OrderedDict[str, np.ndarray]", dict, dict]:
    """Retourne (état, configuration du modèle, métadonnées)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: magic {blob[:4]!r} inattendu")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: version {version} non supportée (attendu {CHECKPOINT_VERSION})")
    header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    offset = 12 + header_len
    state: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for spec in header["params"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(blob):
            raise CheckpointError(f"{path}: données tronquées pour {spec['name']}")
        state[spec["name"]] = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape).astype(np.float64)
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} octets inattendus en fin de fichier")
    return state, header["config"], header.get("metadata", {})

"""
Fichier: src/quantization/formats.py
Lecture/écriture des fichiers binaires little-endian :
  - EMB1 : u32 rows, u32 cols, rows×cols f32
  - SID1 : u32 rows, u32 D, u32 C, rows×D u16
  - OPQ1 : u32 d_text, u32 D, u32 C, rotation f32, puis D codebooks f32
"""

import logging
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np

from src.constants import CODEBOOK_MAGIC, CODES_MAGIC, EMBEDDING_MAGIC

logger = logging.getLogger(__name__)


class QuantizationError(ValueError):
    """Fichier de quantification invalide ou paramètres incohérents."""


@dataclass
class SemanticCodebook:
    rotation: np.ndarray          # (d_text, d_text)
    codebooks: List[np.ndarray]   # D matrices (C, d_text / D)
    # Erreur de quantification après chaque itération externe (non sérialisée)
    error_history: List[float] = field(default_factory=list)

    @property
    def num_subspaces(self) -> int:
        return len(self.codebooks)

    @property
    def codebook_size(self) -> int:
        return self.codebooks[0].shape[0]

    @property
    def d_text(self) -> int:
        return self.rotation.shape[0]


def _read_exact(path: str, magic: bytes, n_header: int):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != magic:
        raise QuantizationError(f"{path}: magic {blob[:4]!r} inattendu (attendu {magic!r})")
    header_end = 4 + 4 * n_header
    if len(blob) < header_end:
        raise QuantizationError(f"{path}: en-tête tronqué")
    header = np.frombuffer(blob[4:header_end], dtype="<u4").astype(np.int64)
    return header, blob[header_end:]


def _ensure_dir(path: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)


def write_embeddings(path: str, matrix: np.ndarray):
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise QuantizationError(f"matrice 2-D attendue, forme {matrix.shape}")
    _ensure_dir(path)
    with open(path, "wb") as f:
        f.write(EMBEDDING_MAGIC)
        f.write(np.array(matrix.shape, dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def read_embeddings(path: str) -> np.ndarray:
    (rows, cols), body = _read_exact(path, EMBEDDING_MAGIC, 2)
    if len(body) != rows * cols * 4:
        raise QuantizationError(f"{path}: {len(body)} octets pour {rows}x{cols} f32")
    matrix = np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(matrix)):
        raise QuantizationError(f"{path}: valeurs non finies")
    return matrix


def write_codes(path: str, codes: np.ndarray, codebook_size: int):
    codes = np.asarray(codes)
    if codes.size and (codes.min() < 0 or codes.max() >= codebook_size):
        raise QuantizationError(f"codes hors de [0, {codebook_size})")
    _ensure_dir(path)
    with open(path, "wb") as f:
        f.write(CODES_MAGIC)
        f.write(np.array([codes.shape[0], codes.shape[1], codebook_size], dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(codes, dtype="<u2").tobytes())


def read_codes(path: str):
    """Retourne (codes |V|×D int64, C)."""
    (rows, n_sub, size), body = _read_exact(path, CODES_MAGIC, 3)
    if len(body) != rows * n_sub * 2:
        raise QuantizationError(f"{path}: taille incohérente avec {rows}x{n_sub} u16")
    codes = np.frombuffer(body, dtype="<u2").reshape(rows, n_sub).astype(np.int64)
    return codes, int(size)


def write_codebook(path: str, codebook: SemanticCodebook):
    _ensure_dir(path)
    with open(path, "wb") as f:
        f.write(CODEBOOK_MAGIC)
        f.write(np.array([codebook.d_text, codebook.num_subspaces, codebook.codebook_size], dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(codebook.rotation, dtype="<f4").tobytes())
        for centroids in codebook.codebooks:
            f.write(np.ascontiguousarray(centroids, dtype="<f4").tobytes())


def read_codebook(path: str) -> SemanticCodebook:
    (d_text, n_sub, size), body = _read_exact(path, CODEBOOK_MAGIC, 3)
    sub_dim = d_text // n_sub
    expected = (d_text * d_text + n_sub * size * sub_dim) * 4
    if len(body) != expected:
        raise QuantizationError(f"{path}: {len(body)} octets, {expected} attendus")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    rotation = values[: d_text * d_text].reshape(d_text, d_text)
    rest = values[d_text * d_text:].reshape(n_sub, size, sub_dim)
    return SemanticCodebook(rotation=rotation, codebooks=[rest[k].copy() for k in range(n_sub)])

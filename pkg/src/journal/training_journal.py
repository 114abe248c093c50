# Fichier: src/journal/training_journal.py
"""
Module pour la gestion du journal d'entraînement.

Ce module gère l'écriture d'un enregistrement JSON Lines par époque
(`{epoch, loss_ce, loss_trans, valid_ndcg10, seconds}`) pour une analyse
ultérieure, et sa relecture.

Version: 1.0
"""

__version__ = "1.0"

import json
import logging
import os
from typing import Any, Dict, List

logger = logging.getLogger(__name__)


class TrainingJournal:
    """
    Gère l'enregistrement des époques dans un fichier JSON Lines.
    """

    FIELDS = ("epoch", "loss_ce", "loss_trans", "valid_ndcg10", "seconds")

    def __init__(self, filepath: str, overwrite: bool = True):
        self.filepath = filepath
        self._initialize_file(overwrite)

    def _initialize_file(self, overwrite: bool):
        """Crée le dossier du journal et vide le fichier si demandé."""
        try:
            os.makedirs(os.path.dirname(self.filepath) or ".", exist_ok=True)
            if overwrite or not os.path.isfile(self.filepath):
                with open(self.filepath, "w", encoding="utf-8"):
                    pass
        except IOError as e:
            logger.error(f"Erreur lors de l'initialisation du journal {self.filepath}: {e}", exc_info=True)

    def record_epoch(self, record: Dict[str, Any]):
        """
        Ajoute une époque au journal.

        Args:
            record (Dict): doit contenir au moins les champs de FIELDS.
        """
        missing = [f for f in self.FIELDS if f not in record]
        if missing:
            logger.warning(f"Enregistrement d'époque incomplet (champs manquants : {missing}).")
            return
        try:
            with open(self.filepath, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        except IOError as e:
            logger.error(f"Impossible d'écrire dans le journal {self.filepath}: {e}", exc_info=True)

    def read(self) -> List[Dict[str, Any]]:
        if not os.path.isfile(self.filepath):
            return []
        with open(self.filepath, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

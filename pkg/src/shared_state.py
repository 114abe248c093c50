"""
Fichier: src/shared_state.py
Version: 3.0

État partagé global du pipeline, accessible par tous les threads
(API Flask, boucle d'entraînement, étapes du pipeline).
"""

import copy
import threading

from src.constants import MAX_LOG_ENTRIES

_RUNNING = True
_CONFIG = {}
_STATUS = {"status": "INITIALIZING", "message": "Pipeline en démarrage...", "stage": None}
_LOGS = []
_EPOCHS = []
_ARTIFACTS = {}
_lock = threading.Lock()


def is_running():
    """Vérifie si le pipeline est censé continuer."""
    with _lock:
        return _RUNNING


def request_stop():
    """Demande l'arrêt de l'entraînement à la fin de l'époque courante."""
    global _RUNNING
    with _lock:
        _RUNNING = False
    set_status("STOPPING", "Arrêt demandé.")


def set_config(config_data):
    global _CONFIG
    with _lock:
        _CONFIG = copy.deepcopy(config_data)


def get_config():
    with _lock:
        return copy.deepcopy(_CONFIG)


def set_status(status, message, stage=None):
    """Met à jour le statut pour l'API."""
    global _STATUS
    with _lock:
        _STATUS = {"status": status, "message": message, "stage": stage}


def add_log(log_message):
    """Ajoute un message pour l'API (les plus anciens sont éliminés)."""
    with _lock:
        _LOGS.append(log_message)
        if len(_LOGS) > MAX_LOG_ENTRIES:
            _LOGS.pop(0)


def record_epoch(record):
    """Enregistre le résumé d'une époque d'entraînement."""
    with _lock:
        _EPOCHS.append(dict(record))


def record_artifact(name, path):
    with _lock:
        _ARTIFACTS[name] = path


def reset():
    """Remet l'état à zéro (nouveau run, tests)."""
    global _RUNNING, _CONFIG, _STATUS
    with _lock:
        _RUNNING = True
        _CONFIG = {}
        _STATUS = {"status": "INITIALIZING", "message": "Pipeline en démarrage...", "stage": None}
        _LOGS.clear()
        _EPOCHS.clear()
        _ARTIFACTS.clear()


def get_all_data():
    """Point d'entrée unique pour l'API."""
    with _lock:
        return {
            "status": dict(_STATUS),
            "logs": list(_LOGS),
            "epochs": [dict(e) for e in _EPOCHS],
            "artifacts": dict(_ARTIFACTS),
        }

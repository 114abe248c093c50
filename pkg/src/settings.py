"""
Fichier: src/settings.py
Chargement et validation de la configuration d'un run (config.yaml).

La configuration utilisateur est fusionnée sur DEFAULT_CONFIG ; les clés
inconnues, les types invalides et les valeurs hors bornes sont collectés
puis levés ensemble (ConfigValidationError).

Version: 1.0
"""

__version__ = "1.0"

import copy
import hashlib
import json
import logging
import os
from typing import Any, Dict, List

import yaml

logger = logging.getLogger(__name__)


class ConfigValidationError(ValueError):
    """Configuration invalide ; `errors` liste tous les problèmes trouvés."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("Configuration invalide:\n  - " + "\n  - ".join(self.errors))


# Valeurs par défaut (paramètres d'implémentation publiés, tailles réduites pour le bureau)
DEFAULT_CONFIG: Dict[str, Any] = {
    "seed": 42,
    "paths": {
        "interactions": "data/interactions.tsv",
        "items": "data/items.jsonl",
        "embeddings": "data/item_text_raw.emb",
        "scores": "data/llm_scores.jsonl",
        "out_dir": "runs/default",
        "relations": "relations.jsonl",
        "codes": "codes.sid",
        "checkpoints": "model.ckpt",
        "reports": "reports",
    },
    "corpus": {
        "k_core": 5,
        "max_len": 20,
    },
    "synthetic": {
        "num_items": 300,
        "num_bundles": 30,
        "p_bundle": 0.7,
        "num_users": 2000,
        "min_len": 6,
        "max_len": 14,
        "raw_dim": 256,
        "bundle_weight": 0.6,
    },
    "miner": {
        "window": 3,
        "theta_f": 2,
        "theta_c": 0.5,
        "theta_s": 0.85,
        "backend": "mock",
        "max_in_flight": 4,
        "full_scan": False,
        "http": {
            "url": "http://127.0.0.1:5055/v1/chat/completions",
            "model": "gemma-3-27b-it",
            "token_env": "SCORER_API_TOKEN",
            "timeout": 60.0,
            "max_tries": 5,
        },
    },
    "opq": {
        "d_text": 128,
        "num_subspaces": 32,
        "codebook_size": 256,
        "iters": 20,
        "kmeans_iters": 25,
        "tol": 1e-5,
    },
    "model": {
        "hidden": 128,
        "align_hidden": 256,
        "layers": 2,
        "heads": 2,
        "ffn": 256,
        "dropout": 0.2,
        "lambda_": 1.2,
        "epsilon": 1.0,
        "init_std": 0.02,
    },
    "train": {
        "lr": 1e-3,
        "batch_size": 256,
        "gamma": 1.0,
        "tau": 0.07,
        "epochs": 50,
        "patience": 10,
        "clip_norm": 5.0,
    },
    "evaluation": {
        "ks": [5, 10, 20],
        "exclude_history": False,
        "record_timing": False,
        "n_random": 10000,
        "bins": 50,
        "batch_size": 512,
    },
    "ablation": {
        "no_sem_codes": False,
        "no_alignment": False,
        "no_trans_guide": False,
    },
    "experiments": {
        "seeds": [0, 1, 2],
    },
    "logging": {
        "level": "INFO",
    },
    "api": {
        "host": "127.0.0.1",
        "port": 5055,
    },
}

# Bornes : (minimum, inclusif?) ; None = pas de contrainte
_POSITIVE = {
    ("corpus", "k_core"), ("corpus", "max_len"),
    ("synthetic", "num_items"), ("synthetic", "num_bundles"), ("synthetic", "num_users"),
    ("synthetic", "min_len"), ("synthetic", "max_len"), ("synthetic", "raw_dim"),
    ("miner", "theta_f"), ("miner", "theta_s"), ("miner", "max_in_flight"),
    ("opq", "d_text"), ("opq", "num_subspaces"), ("opq", "codebook_size"), ("opq", "iters"),
    ("opq", "kmeans_iters"), ("opq", "tol"),
    ("model", "hidden"), ("model", "align_hidden"), ("model", "heads"), ("model", "ffn"),
    ("model", "epsilon"), ("model", "init_std"),
    ("train", "lr"), ("train", "batch_size"), ("train", "tau"), ("train", "epochs"),
    ("train", "patience"), ("train", "clip_norm"),
    ("evaluation", "n_random"), ("evaluation", "bins"), ("evaluation", "batch_size"),
}
_NON_NEGATIVE = {("model", "layers"), ("model", "lambda_"), ("train", "gamma"), ("seed",)}
_UNIT_INTERVAL = {("synthetic", "p_bundle"), ("synthetic", "bundle_weight"), ("miner", "theta_c"),
                  ("miner", "theta_s")}
_BACKENDS = ("file", "mock", "http")


def _deep_merge(base: dict, override: dict, prefix: str, errors: List[str]) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            errors.append(f"clé inconnue '{path}'")
            continue
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                errors.append(f"'{path}' doit être une section (dictionnaire)")
                continue
            merged[key] = _deep_merge(base[key], value, f"{path}.", errors)
        else:
            merged[key] = value
    return merged


def _check_types(default: dict, config: dict, prefix: str, errors: List[str]):
    for key, ref in default.items():
        path = f"{prefix}{key}"
        value = config.get(key)
        if isinstance(ref, dict):
            _check_types(ref, value, f"{path}.", errors)
        elif isinstance(ref, bool):
            if not isinstance(value, bool):
                errors.append(f"'{path}' doit être un booléen (reçu {value!r})")
        elif isinstance(ref, int):
            if isinstance(value, bool) or not isinstance(value, int):
                errors.append(f"'{path}' doit être un entier (reçu {value!r})")
        elif isinstance(ref, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                errors.append(f"'{path}' doit être un nombre (reçu {value!r})")
        elif isinstance(ref, str):
            if not isinstance(value, str):
                errors.append(f"'{path}' doit être une chaîne (reçu {value!r})")
        elif isinstance(ref, list):
            if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
                errors.append(f"'{path}' doit être une liste d'entiers (reçu {value!r})")


def _get(config: dict, path: tuple):
    node = config
    for key in path:
        node = node[key]
    return node


def _check_ranges(config: dict, errors: List[str]):
    def numeric(path):
        value = _get(config, path)
        return value if isinstance(value, (int, float)) and not isinstance(value, bool) else None

    for path in sorted(_POSITIVE):
        value = numeric(path)
        if value is not None and value <= 0:
            errors.append(f"'{'.'.join(path)}' doit être > 0 (reçu {value})")
    for path in sorted(_NON_NEGATIVE):
        value = numeric(path)
        if value is not None and value < 0:
            errors.append(f"'{'.'.join(path)}' doit être >= 0 (reçu {value})")
    for path in sorted(_UNIT_INTERVAL):
        value = numeric(path)
        if value is not None and not 0.0 <= value <= 1.0:
            errors.append(f"'{'.'.join(path)}' doit être dans [0, 1] (reçu {value})")

    window = numeric(("miner", "window"))
    if window is not None and window < 2:
        errors.append(f"'miner.window' doit être >= 2 (reçu {window})")
    dropout = numeric(("model", "dropout"))
    if dropout is not None and not 0.0 <= dropout < 1.0:
        errors.append(f"'model.dropout' doit être dans [0, 1) (reçu {dropout})")
    if config["miner"]["backend"] not in _BACKENDS:
        errors.append(f"'miner.backend' doit valoir l'un de {_BACKENDS} (reçu {config['miner']['backend']!r})")

    d_text, n_sub = numeric(("opq", "d_text")), numeric(("opq", "num_subspaces"))
    if d_text and n_sub and d_text % n_sub != 0:
        errors.append(f"'opq.d_text' ({d_text}) doit être divisible par 'opq.num_subspaces' ({n_sub})")
    hidden, heads = numeric(("model", "hidden")), numeric(("model", "heads"))
    if hidden and heads and hidden % heads != 0:
        errors.append(f"'model.hidden' ({hidden}) doit être divisible par 'model.heads' ({heads})")
    lo, hi = numeric(("synthetic", "min_len")), numeric(("synthetic", "max_len"))
    if lo and hi and lo > hi:
        errors.append(f"'synthetic.min_len' ({lo}) dépasse 'synthetic.max_len' ({hi})")
    ks = config["evaluation"]["ks"]
    if isinstance(ks, list) and (not ks or any(k <= 0 for k in ks if isinstance(k, int))):
        errors.append(f"'evaluation.ks' doit contenir des entiers > 0 (reçu {ks})")
    elif isinstance(ks, list) and 10 not in ks:
        errors.append(f"'evaluation.ks' doit contenir 10 (NDCG@10 pilote l'arrêt anticipé) (reçu {ks})")
    if config["logging"]["level"].upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        errors.append(f"'logging.level' invalide: {config['logging']['level']!r}")


def validate_config(user_config: dict) -> dict:
    """Fusionne sur les défauts et valide ; retourne la config complète."""
    errors: List[str] = []
    if user_config is None:
        user_config = {}
    if not isinstance(user_config, dict):
        raise ConfigValidationError([f"la configuration doit être un dictionnaire (reçu {type(user_config).__name__})"])
    config = _deep_merge(DEFAULT_CONFIG, user_config, "", errors)
    _check_types(DEFAULT_CONFIG, config, "", errors)
    if not errors:
        _check_ranges(config, errors)
    if errors:
        raise ConfigValidationError(errors)
    return config


def load_config(path: str = None) -> dict:
    """Charge config.yaml (ou un fichier JSON, sous-ensemble de YAML) et le valide."""
    if path is None:
        logger.info("Aucun fichier de configuration fourni : valeurs par défaut.")
        return validate_config({})
    if not os.path.exists(path):
        raise ConfigValidationError([f"fichier de configuration introuvable: {path}"])
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigValidationError([f"YAML invalide dans {path}: {e}"]) from e
    config = validate_config(raw or {})
    logger.info(f"Configuration chargée depuis {path} (hash {config_hash(config)[:12]})")
    return config


def apply_overrides(config: dict, seed: int = None, out_dir: str = None, ablations=None) -> dict:
    """Applique les options de ligne de commande puis revalide."""
    updated = copy.deepcopy(config)
    if seed is not None:
        updated["seed"] = seed
    if out_dir is not None:
        updated["paths"]["out_dir"] = out_dir
    for flag in ablations or ():
        updated["ablation"][flag] = True
    return validate_config(updated)


def effective_model_settings(config: dict) -> dict:
    """λ, γ et les interrupteurs d'architecture après application des ablations."""
    ablation = config["ablation"]
    no_transition = ablation["no_trans_guide"] or ablation["no_sem_codes"]
    return {
        "lambda_": 0.0 if no_transition else float(config["model"]["lambda_"]),
        "gamma": 0.0 if no_transition else float(config["train"]["gamma"]),
        "use_codes": not ablation["no_sem_codes"],
        "use_alignment": not ablation["no_alignment"],
    }


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

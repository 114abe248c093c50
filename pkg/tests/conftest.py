import copy
import os

import numpy as np
import pytest

from src import shared_state
from src.model.recommender import ComplementaryTransitionRecommender, ModelConfig
from src.settings import validate_config

# Tailles de bureau pour les tests du pipeline complet
TINY_OVERRIDES = {
    "synthetic": {"num_items": 40, "num_bundles": 8, "num_users": 120, "min_len": 6, "max_len": 10, "raw_dim": 32},
    "opq": {"d_text": 8, "num_subspaces": 2, "codebook_size": 4, "iters": 3, "kmeans_iters": 5},
    "model": {"hidden": 16, "align_hidden": 32, "layers": 1, "heads": 2, "ffn": 32, "dropout": 0.1},
    "train": {"batch_size": 64, "epochs": 2, "patience": 2},
    "evaluation": {"n_random": 200, "bins": 10, "batch_size": 128},
    "miner": {"max_in_flight": 2},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict):
            out[key] = _merge(out.get(key, {}), value)
        else:
            out[key] = value
    return out


def make_config(root, overrides=None) -> dict:
    """Configuration validée dont tous les chemins vivent sous `root`."""
    root = str(root)
    user = _merge(TINY_OVERRIDES, {
        "seed": 7,
        "paths": {
            "interactions": os.path.join(root, "data", "interactions.tsv"),
            "items": os.path.join(root, "data", "items.jsonl"),
            "embeddings": os.path.join(root, "data", "raw.emb"),
            "scores": os.path.join(root, "data", "scores.jsonl"),
            "out_dir": os.path.join(root, "run"),
        },
    })
    return validate_config(_merge(user, overrides or {}))


@pytest.fixture(autouse=True)
def clean_shared_state():
    shared_state.reset()
    yield
    shared_state.reset()


@pytest.fixture
def tiny_config(tmp_path):
    return make_config(tmp_path)


def make_tiny_model(num_items=6, d_text=5, num_subspaces=2, codebook_size=4, hidden=8, heads=1, layers=1,
                    align_hidden=16, ffn=16, max_len=4, lambda_=1.2, init_std=0.4, dropout=0.0, seed=0,
                    use_codes=True, use_alignment=True, random_prior=True):
    """Petit modèle déterministe ; T initialisé aléatoirement pour que la standardisation ne soit pas dégénérée."""
    rng = np.random.default_rng(seed)
    codes = rng.integers(0, codebook_size, size=(num_items, num_subspaces))
    text = rng.normal(size=(num_items, d_text))
    prior = rng.normal(size=(num_subspaces, codebook_size, codebook_size)) if random_prior else None
    config = ModelConfig(num_items=num_items, d_text=d_text, num_subspaces=num_subspaces,
                         codebook_size=codebook_size, hidden=hidden, align_hidden=align_hidden, layers=layers,
                         heads=heads, ffn=ffn, dropout=dropout, max_len=max_len, lambda_=lambda_,
                         init_std=init_std, use_codes=use_codes, use_alignment=use_alignment, seed=seed)
    return ComplementaryTransitionRecommender(config, codes, text, prior)


@pytest.fixture
def tiny_model():
    return make_tiny_model()

"""
Fichier: src/experiments/runner.py
Expériences au-dessus du pipeline : ablations multi-graines, balayage d'un
hyper-paramètre et mesure des temps d'entraînement / d'évaluation.

Les artefacts amont (jeu préparé, codes, relations) sont partagés ; chaque
configuration entraîne son modèle dans un sous-dossier de `paths.out_dir`.

Version: 1.0
"""

__version__ = "1.0"

import copy
import logging
import os
import time
import tracemalloc
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from src.analysis.evaluator import evaluate
from src.constants import ABLATION_VARIANTS, SWEEP_PARAMETERS, TEST_SPLIT
from src.pipeline.artifacts import RunPaths
from src.pipeline import stages
from src.settings import ConfigValidationError, effective_model_settings, validate_config
from src.training.trainer import TrainSettings, fit

logger = logging.getLogger(__name__)


def ensure_upstream(config: dict, paths: RunPaths):
    """Produit les artefacts amont absents (jeu préparé, codes, relations)."""
    if not os.path.exists(paths.dataset):
        stages.run_prepare_data(config, paths)
    if not (os.path.exists(paths.codes) and os.path.exists(paths.text_embeddings)):
        stages.run_build_codes(config, paths)
    if not os.path.exists(paths.relations):
        stages.run_mine_relations(config, paths)


def variant_config(config: dict, variant: str, seed: int) -> dict:
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"variante inconnue: {variant!r}")
    updated = copy.deepcopy(config)
    updated["seed"] = seed
    for flag in updated["ablation"]:
        updated["ablation"][flag] = flag == variant
    return validate_config(updated)


def train_and_evaluate(config: dict, paths: RunPaths) -> Dict[str, float]:
    stages.run_train(config, paths)
    report = stages.run_evaluate(config, paths, TEST_SPLIT)
    return {"ndcg10": report.ndcg(10), "recall10": report.recall(10)}


# --- Ablations ---

def summarize_ablation(rows: pd.DataFrame) -> dict:
    """Moyenne/écart-type par variante et vérification de l'ordre attendu."""
    grouped = rows.groupby("variant")[["ndcg10", "recall10"]].agg(["mean", "std"])
    summary = {}
    for variant in ABLATION_VARIANTS:
        if variant not in grouped.index:
            continue
        summary[variant] = {
            "ndcg10_mean": float(grouped.loc[variant, ("ndcg10", "mean")]),
            "ndcg10_std": float(np.nan_to_num(grouped.loc[variant, ("ndcg10", "std")])),
            "recall10_mean": float(grouped.loc[variant, ("recall10", "mean")]),
            "recall10_std": float(np.nan_to_num(grouped.loc[variant, ("recall10", "std")])),
        }
    out = {"variants": summary}
    if "full" in summary:
        full = summary["full"]["ndcg10_mean"]
        others = {v: s["ndcg10_mean"] for v, s in summary.items() if v != "full"}
        out["full_is_best"] = all(value <= full for value in others.values())
        if "no_sem_codes" in summary:
            out["text_only_is_weakest"] = all(s["ndcg10_mean"] >= summary["no_sem_codes"]["ndcg10_mean"]
                                              for s in summary.values())
    return out


def run_ablation(config: dict, seeds: Sequence[int], variants: Sequence[str] = ABLATION_VARIANTS) -> dict:
    base = RunPaths.from_config(config)
    ensure_upstream(config, base)
    rows: List[dict] = []
    for variant in variants:
        for seed in seeds:
            cfg = variant_config(config, variant, seed)
            paths = RunPaths.from_config(cfg, model_subdir=os.path.join("ablation", variant, f"seed{seed}"))
            logger.info(f"Ablation {variant}, graine {seed} : {effective_model_settings(cfg)}")
            rows.append({"variant": variant, "seed": seed, **train_and_evaluate(cfg, paths)})
    table = pd.DataFrame(rows)
    result = {"seeds": list(seeds), "runs": rows, **summarize_ablation(table)}
    stages.write_json(os.path.join(base.reports, "ablation.json"), result)
    for variant, s in result["variants"].items():
        logger.info(f"{variant:>15}: NDCG@10 {s['ndcg10_mean']:.4f} ± {s['ndcg10_std']:.4f}, "
                    f"Recall@10 {s['recall10_mean']:.4f} ± {s['recall10_std']:.4f}")
    return result


# --- Balayage d'un hyper-paramètre ---

def parse_grid(spec: str):
    """`nom=v1,v2,...` -> (nom, [valeurs float])."""
    if "=" not in spec:
        raise ConfigValidationError([f"--grid attend 'nom=v1,v2,...' (reçu {spec!r})"])
    name, raw_values = spec.split("=", 1)
    name = name.strip()
    if name not in SWEEP_PARAMETERS:
        raise ConfigValidationError([f"paramètre de balayage inconnu {name!r} (choix : {sorted(SWEEP_PARAMETERS)})"])
    try:
        values = [float(v) for v in raw_values.split(",") if v.strip()]
    except ValueError:
        raise ConfigValidationError([f"valeurs de --grid non numériques: {raw_values!r}"]) from None
    if not values:
        raise ConfigValidationError(["--grid sans valeur"])
    return name, values


def run_sweep(config: dict, parameter: str, values: Sequence[float]) -> dict:
    section, key = SWEEP_PARAMETERS[parameter]
    base = RunPaths.from_config(config)
    ensure_upstream(config, base)
    configs = []
    errors = []
    for value in values:
        cfg = copy.deepcopy(config)
        cfg[section][key] = float(value)
        try:
            configs.append((value, validate_config(cfg)))
        except ConfigValidationError as e:
            errors.extend(e.errors)
    if errors:
        raise ConfigValidationError(errors)

    rows = []
    for value, cfg in configs:
        paths = RunPaths.from_config(cfg, model_subdir=os.path.join("sweep", f"{parameter}={value:g}"))
        rows.append({"value": value, **train_and_evaluate(cfg, paths)})
        logger.info(f"Balayage {parameter}={value:g} : NDCG@10 {rows[-1]['ndcg10']:.4f}")
    result = {"parameter": parameter, "seed": config["seed"], "rows": rows}
    stages.write_json(os.path.join(base.reports, f"sweep_{parameter}.json"), result)
    return result


# --- Mesure des temps ---

def run_timing(config: dict, epochs: int = 2, eval_repeats: int = 3) -> dict:
    """Secondes moyennes par époque et par passe d'évaluation complète, pic mémoire tracé."""
    paths = RunPaths.from_config(config)
    ensure_upstream(config, paths)
    data = stages.load_prepared(paths)
    codes, codebook_size, text = stages.load_codes(paths)
    relations = stages.load_relations(paths, data.item_ids)

    tracemalloc.start()
    try:
        model = stages.build_model(config, data, codes, codebook_size, text, relations)
        settings = TrainSettings.from_config(config, effective_model_settings(config))
        settings.epochs, settings.patience = epochs, epochs
        history = fit(model, data.splits, settings).history
        eval_seconds = []
        for _ in range(eval_repeats):
            start = time.perf_counter()
            evaluate(model, data.splits.test, ks=config["evaluation"]["ks"], split=TEST_SPLIT,
                     batch_size=config["evaluation"]["batch_size"])
            eval_seconds.append(time.perf_counter() - start)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()

    result = {
        "epochs": len(history),
        "seconds_per_epoch": float(np.mean([h["seconds"] for h in history])),
        "seconds_per_evaluation": float(np.mean(eval_seconds)),
        "peak_memory_bytes": int(peak),
        "num_parameters": model.num_parameters(),
        "users": len(data.splits.test),
        "items": len(data.items),
    }
    stages.write_json(os.path.join(paths.reports, "timing.json"), result)
    logger.info(f"Temps : {result['seconds_per_epoch']:.2f}s/époque, {result['seconds_per_evaluation']:.2f}s/évaluation, "
                f"pic mémoire {result['peak_memory_bytes'] / 2**20:.1f} Mio")
    return result

"""
Fichier: src/pipeline/stages.py
Étapes du pipeline, une par sous-commande : synth, prepare-data, build-codes,
mine-relations, train, evaluate, analyze-transitions, run-all.

Chaque étape lit ses artefacts amont (erreur nommant la sous-commande
productrice s'ils manquent), écrit ses sorties et leur compagnon
`.meta.json`, et journalise son hash de configuration et sa graine.

Version: 1.0
"""

__version__ = "1.0"

import json
import logging
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src import shared_state
from src.analysis.evaluator import evaluate, write_report
from src.analysis.metrics import MetricReport
from src.analysis.transition_analysis import TransitionDistributions, transition_analysis, write_analysis
from src.constants import ARTIFACT_DATASET, ARTIFACT_TEXT_EMBEDDINGS, PRODUCERS, TEST_SPLIT, VALID_SPLIT
from src.data_ingest.corpus import (
    DatasetSplits,
    Item,
    build_text_feature,
    dataset_statistics,
    k_core_filter,
    load_corpus,
    load_dataset,
    save_dataset,
    split_leave_one_out,
    write_splits,
)
from src.data_ingest.synthetic import generate_corpus, write_corpus
from src.journal.training_journal import TrainingJournal
from src.model.checkpoint import load_checkpoint, save_checkpoint
from src.model.recommender import ComplementaryTransitionRecommender, ModelConfig
from src.model.transition import init_transition_prior
from src.pipeline.artifacts import RunPaths, require, write_meta
from src.quantization.formats import read_codes, read_embeddings, write_codebook, write_codes, write_embeddings
from src.quantization.opq import encode, pca_reduce, train_opq
from src.quantization.text_embedder import mock_embed
from src.relations.relation_miner import RelationSet, mine_relations, read_relations, write_relations
from src.relations.scorers import build_scorer
from src.settings import config_hash, effective_model_settings
from src.training.trainer import FitResult, TrainSettings, fit

logger = logging.getLogger(__name__)


def _start(stage: str, config: dict):
    message = f"Étape {stage} : seed={config['seed']}, config={config_hash(config)[:12]}"
    logger.info(message)
    shared_state.set_status("RUNNING", message, stage=stage)
    shared_state.add_log(message)


def write_json(path: str, payload: dict):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# --- Chargement des artefacts ---

@dataclass
class PreparedData:
    items: List[Item]
    splits: DatasetSplits

    @property
    def item_ids(self) -> List[str]:
        return [item.item_id for item in self.items]


def load_prepared(paths: RunPaths) -> PreparedData:
    require(paths.dataset, PRODUCERS[ARTIFACT_DATASET])
    items, sequences, max_len = load_dataset(paths.dataset)
    return PreparedData(items=items, splits=split_leave_one_out(sequences, max_len))


def load_codes(paths: RunPaths) -> Tuple[np.ndarray, int, np.ndarray]:
    """(codes, C, embeddings textuels réduits)."""
    require(paths.codes, PRODUCERS["codes"])
    require(paths.text_embeddings, PRODUCERS[ARTIFACT_TEXT_EMBEDDINGS])
    codes, codebook_size = read_codes(paths.codes)
    return codes, codebook_size, read_embeddings(paths.text_embeddings)


def load_relations(paths: RunPaths, item_ids: List[str]) -> RelationSet:
    require(paths.relations, PRODUCERS["relations"])
    return read_relations(paths.relations, item_ids)


# --- Étapes ---

def run_synth(config: dict, paths: RunPaths):
    _start("synth", config)
    corpus = generate_corpus(config["synthetic"], config["seed"])
    write_corpus(corpus, paths.interactions, paths.items, paths.raw_embeddings)
    for output in (paths.interactions, paths.items, paths.raw_embeddings):
        write_meta(output, "synth", config, inputs=[], extra={"synthetic": config["synthetic"]})
    return corpus


def run_prepare_data(config: dict, paths: RunPaths) -> PreparedData:
    _start("prepare-data", config)
    require(paths.interactions, PRODUCERS["interactions"])
    require(paths.items, PRODUCERS["items"])
    raw_sequences, item_table = load_corpus(paths.interactions, paths.items)
    sequences, item_ids = k_core_filter(raw_sequences, config["corpus"]["k_core"])
    items = []
    for index, item_id in enumerate(item_ids):
        item = item_table[item_id]
        item.internal_index = index
        items.append(item)
    max_len = config["corpus"]["max_len"]
    save_dataset(paths.dataset, items, sequences, max_len)
    splits = split_leave_one_out(sequences, max_len)
    write_splits(splits, item_ids, paths.splits_template)
    stats = dataset_statistics(sequences, len(items))
    write_json(paths.dataset_stats, stats)
    logger.info(f"Jeu préparé : {stats['users']} utilisateurs, {stats['items']} items, "
                f"sparsité {stats['sparsity']:.4%}, longueur moyenne {stats['avg_len']:.2f}")
    write_meta(paths.dataset, "prepare-data", config, inputs=[paths.interactions, paths.items])
    return PreparedData(items=items, splits=splits)


def _aligned_raw_embeddings(items: List[Item], raw: np.ndarray, seed: int) -> np.ndarray:
    """Ligne brute de chaque item retenu ; les items sans métadonnées reçoivent l'embedding mock de leur texte."""
    rows = np.zeros((len(items), raw.shape[1]), dtype=np.float64)
    fallback = []
    for idx, item in enumerate(items):
        if item.source_row is not None and 0 <= item.source_row < raw.shape[0]:
            rows[idx] = raw[item.source_row]
        else:
            fallback.append(idx)
    if fallback:
        logger.warning(f"{len(fallback)} item(s) sans embedding brut : embedding mock de leur texte de repli.")
        rows[fallback] = mock_embed([build_text_feature(items[i]) for i in fallback], raw.shape[1], seed=seed)
    return rows


def run_build_codes(config: dict, paths: RunPaths) -> np.ndarray:
    _start("build-codes", config)
    data = load_prepared(paths)
    require(paths.raw_embeddings, PRODUCERS["embeddings"])
    raw = read_embeddings(paths.raw_embeddings)
    opq_cfg = config["opq"]
    reduced = pca_reduce(_aligned_raw_embeddings(data.items, raw, config["seed"]), opq_cfg["d_text"])
    write_embeddings(paths.text_embeddings, reduced)
    # Relecture f32 : les codes sont calculés sur exactement ce que les étapes suivantes liront
    reduced = read_embeddings(paths.text_embeddings)

    start = time.perf_counter()
    codebook = train_opq(reduced, opq_cfg["num_subspaces"], opq_cfg["codebook_size"], iters=opq_cfg["iters"],
                         seed=config["seed"], kmeans_iters=opq_cfg["kmeans_iters"], tol=opq_cfg["tol"])
    codes = encode(reduced, codebook)
    write_codebook(paths.codebook, codebook)
    write_codes(paths.codes, codes, opq_cfg["codebook_size"])
    used = [len(np.unique(codes[:, k])) for k in range(codes.shape[1])]
    logger.info(f"Codes sémantiques : {codes.shape[0]} items × {codes.shape[1]} sous-espaces, "
                f"{min(used)}-{max(used)} centroïdes utilisés par sous-espace.")
    extra = {"seconds": time.perf_counter() - start, "error_history": codebook.error_history}
    inputs = [paths.dataset, paths.raw_embeddings]
    write_meta(paths.text_embeddings, "build-codes", config, inputs=inputs)
    write_meta(paths.codebook, "build-codes", config, inputs=inputs, extra=extra)
    write_meta(paths.codes, "build-codes", config, inputs=inputs, extra=extra)
    return codes


def run_mine_relations(config: dict, paths: RunPaths) -> RelationSet:
    _start("mine-relations", config)
    data = load_prepared(paths)
    require(paths.text_embeddings, PRODUCERS[ARTIFACT_TEXT_EMBEDDINGS])
    embeddings = read_embeddings(paths.text_embeddings)
    miner = config["miner"]
    backend = build_scorer(miner, paths.scores)
    start = time.perf_counter()
    try:
        relations = mine_relations(
            [seq.items for seq in data.splits.train], data.items, embeddings, backend,
            window=miner["window"], theta_f=miner["theta_f"], theta_c=miner["theta_c"],
            theta_s=miner["theta_s"], max_in_flight=miner["max_in_flight"], full_scan=miner["full_scan"],
        )
    finally:
        backend.close()
    write_relations(paths.relations, relations, data.item_ids)
    inputs = [paths.dataset, paths.text_embeddings] + ([paths.scores] if miner["backend"] == "file" else [])
    write_meta(paths.relations, "mine-relations", config, inputs=inputs,
               extra={"stats": relations.stats, "backend": backend.name, "seconds": time.perf_counter() - start})
    return relations


def build_model(config: dict, data: PreparedData, codes: np.ndarray, codebook_size: int, text: np.ndarray,
                relations: Optional[RelationSet]) -> ComplementaryTransitionRecommender:
    """Modèle initialisé (prior de transition issu des relations si les codes sont utilisés)."""
    effective = effective_model_settings(config)
    model_config = ModelConfig.from_settings(config, effective, num_items=len(data.items), d_text=text.shape[1],
                                             num_subspaces=codes.shape[1], codebook_size=codebook_size,
                                             max_len=data.splits.max_len)
    prior = None
    if model_config.use_codes and relations is not None:
        prior = init_transition_prior(relations.comp, codes, codes.shape[1], codebook_size, model_config.epsilon)
    return ComplementaryTransitionRecommender(model_config, codes, text, prior)


def run_train(config: dict, paths: RunPaths) -> Tuple[ComplementaryTransitionRecommender, FitResult]:
    _start("train", config)
    data = load_prepared(paths)
    codes, codebook_size, text = load_codes(paths)
    relations = load_relations(paths, data.item_ids)
    model = build_model(config, data, codes, codebook_size, text, relations)
    settings = TrainSettings.from_config(config, effective_model_settings(config))
    journal = TrainingJournal(paths.train_log)
    start = time.perf_counter()
    result = fit(model, data.splits, settings, journal=journal)
    metadata = {
        "seed": config["seed"],
        "config_hash": config_hash(config),
        "best_epoch": result.best_epoch,
        "best_valid_ndcg10": result.best_metric,
        "epochs_run": result.epochs_run,
    }
    save_checkpoint(paths.checkpoint, model.state_dict(), model.config.to_dict(), metadata)
    write_meta(paths.checkpoint, "train", config, inputs=[paths.dataset, paths.codes, paths.text_embeddings,
                                                          paths.relations],
               extra={"seconds": time.perf_counter() - start, "stopped_early": result.stopped_early})
    logger.info(f"Entraînement terminé : meilleure époque {result.best_epoch}, NDCG@10 valid {result.best_metric:.4f}")
    return model, result


def load_trained_model(paths: RunPaths) -> Tuple[ComplementaryTransitionRecommender, PreparedData, dict]:
    """Reconstruit le modèle depuis le checkpoint et les artefacts amont."""
    require(paths.checkpoint, PRODUCERS["checkpoints"])
    data = load_prepared(paths)
    codes, _, text = load_codes(paths)
    state, model_config, metadata = load_checkpoint(paths.checkpoint)
    model = ComplementaryTransitionRecommender(ModelConfig(**model_config), codes, text)
    model.load_state_dict(state)
    return model.eval(), data, metadata


def run_evaluate(config: dict, paths: RunPaths, split: str = TEST_SPLIT) -> MetricReport:
    _start("evaluate", config)
    if split not in (VALID_SPLIT, TEST_SPLIT):
        raise ValueError(f"split inconnu: {split!r}")
    model, data, _ = load_trained_model(paths)
    examples = data.splits.valid if split == VALID_SPLIT else data.splits.test
    eval_cfg = config["evaluation"]
    report = evaluate(model, examples, ks=eval_cfg["ks"], split=split, batch_size=eval_cfg["batch_size"],
                      exclude_history=eval_cfg["exclude_history"])
    output = paths.metrics(split)
    write_report(output, report, include_timing=eval_cfg["record_timing"])
    write_meta(output, "evaluate", config, inputs=[paths.checkpoint, paths.dataset, paths.codes],
               extra={"seconds": report.seconds})
    return report


def run_analyze_transitions(config: dict, paths: RunPaths) -> Optional[TransitionDistributions]:
    _start("analyze-transitions", config)
    model, data, _ = load_trained_model(paths)
    if not model.has_transitions:
        logger.warning("Modèle sans codes sémantiques : aucune transition à analyser.")
        return None
    relations = load_relations(paths, data.item_ids)
    eval_cfg = config["evaluation"]
    result = transition_analysis(model, relations, n_random=eval_cfg["n_random"], seed=config["seed"],
                                 bins=eval_cfg["bins"])
    write_analysis(paths.transitions, result)
    write_meta(paths.transitions, "analyze-transitions", config, inputs=[paths.checkpoint, paths.relations])
    return result


def run_all(config: dict, paths: RunPaths) -> Dict[str, MetricReport]:
    """prepare-data -> build-codes -> mine-relations -> train -> evaluate (valid, test) -> analyze-transitions."""
    run_prepare_data(config, paths)
    run_build_codes(config, paths)
    run_mine_relations(config, paths)
    run_train(config, paths)
    reports = {split: run_evaluate(config, paths, split) for split in (VALID_SPLIT, TEST_SPLIT)}
    run_analyze_transitions(config, paths)
    shared_state.set_status("DONE", "Pipeline terminé.", stage="run-all")
    return reports

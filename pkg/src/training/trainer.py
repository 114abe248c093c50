"""
Fichier: src/training/trainer.py
Boucle d'entraînement : préfixes d'entraînement, lots préparés par un thread
producteur, objectif joint, Adam, arrêt anticipé sur le NDCG@10 de validation.

Version: 1.0
"""

__version__ = "1.0"

import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src import shared_state
from src.analysis.evaluator import evaluate
from src.data_ingest.corpus import DatasetSplits, InteractionSequence
from src.journal.training_journal import TrainingJournal
from src.model.recommender import ComplementaryTransitionRecommender, pad_prefixes
from src.numcore import ComputationTape
from src.training.losses import ce_loss, sample_negatives, total_loss, trans_consistency_loss
from src.training.optimizer import Adam, TrainingError, clip_grad_norm

logger = logging.getLogger(__name__)


@dataclass
class TrainSettings:
    lr: float = 1e-3
    batch_size: int = 256
    gamma: float = 1.0
    tau: float = 0.07
    epochs: int = 50
    patience: int = 10
    clip_norm: float = 5.0
    seed: int = 0
    eval_batch_size: int = 512

    @classmethod
    def from_config(cls, config: dict, effective: dict) -> "TrainSettings":
        t = config["train"]
        return cls(lr=float(t["lr"]), batch_size=t["batch_size"], gamma=effective["gamma"], tau=float(t["tau"]),
                   epochs=t["epochs"], patience=t["patience"], clip_norm=float(t["clip_norm"]),
                   seed=config["seed"], eval_batch_size=config["evaluation"]["batch_size"])


@dataclass
class TrainingBatch:
    prefixes: np.ndarray     # (B, n) alignés à droite
    targets: np.ndarray      # (B,)
    previous: np.ndarray     # dernier item de chaque préfixe (v_t)
    negatives: np.ndarray
    negatives_valid: np.ndarray


@dataclass
class FitResult:
    best_epoch: int
    best_metric: float
    epochs_run: int
    history: List[Dict[str, float]] = field(default_factory=list)
    best_state: Optional[dict] = None
    stopped_early: bool = False


def build_training_examples(sequences: Sequence[InteractionSequence], max_len: int) -> Tuple[List[List[int]], np.ndarray]:
    """Chaque position t = 1..n−1 d'une séquence d'entraînement : (t premiers items tronqués, item t+1)."""
    prefixes, targets = [], []
    for seq in sequences:
        items = list(seq.items)
        for t in range(1, len(items)):
            prefixes.append(items[max(0, t - max_len):t])
            targets.append(items[t])
    return prefixes, np.array(targets, dtype=np.int64)


class BatchPipeline:
    """
    Producteur/consommateur à un emplacement : le lot suivant est assemblé
    dans un thread pendant que le lot courant est calculé.
    """

    _DONE = object()

    def __init__(self, prefixes: List[List[int]], targets: np.ndarray, order: np.ndarray, batch_size: int,
                 max_len: int, rng: np.random.Generator):
        self.prefixes = prefixes
        self.targets = targets
        self.order = order
        self.batch_size = batch_size
        self.max_len = max_len
        self.rng = rng
        self._queue: "queue.Queue" = queue.Queue(maxsize=1)
        self._error: Optional[BaseException] = None

    def _make_batch(self, rows: np.ndarray) -> TrainingBatch:
        chosen = [self.prefixes[r] for r in rows]
        targets = self.targets[rows]
        negatives, valid = sample_negatives(targets, self.rng)
        return TrainingBatch(
            prefixes=pad_prefixes(chosen, self.max_len),
            targets=targets,
            previous=np.array([p[-1] for p in chosen], dtype=np.int64),
            negatives=negatives,
            negatives_valid=valid,
        )

    def _produce(self):
        try:
            for start in range(0, len(self.order), self.batch_size):
                self._queue.put(self._make_batch(self.order[start:start + self.batch_size]))
        except BaseException as e:  # transmis au consommateur
            self._error = e
        finally:
            self._queue.put(self._DONE)

    def __iter__(self) -> Iterator[TrainingBatch]:
        worker = threading.Thread(target=self._produce, name="batch-producer", daemon=True)
        worker.start()
        try:
            while True:
                item = self._queue.get()
                if item is self._DONE:
                    break
                yield item
        finally:
            # Débloque le producteur si le consommateur s'arrête en cours de route
            while worker.is_alive():
                try:
                    self._queue.get(timeout=0.1)
                except queue.Empty:
                    pass
            worker.join()
        if self._error is not None:
            raise self._error


def train_step(model: ComplementaryTransitionRecommender, batch: TrainingBatch, settings: TrainSettings,
               optimizer: Adam) -> Tuple[float, Optional[float]]:
    """Un pas d'optimisation ; retourne (L_CE, L_Trans ou None)."""
    model.zero_grad()
    with ComputationTape() as tape:
        reps = model.item_representations()
        s = model.encode_sequences(batch.prefixes, item_reps=reps)
        ce = ce_loss(s, reps, batch.targets, settings.tau)
        trans = None
        if settings.gamma > 0 and model.has_transitions:
            trans = trans_consistency_loss(model, batch.previous, batch.targets, batch.negatives,
                                           batch.negatives_valid)
        loss = total_loss(ce, trans, settings.gamma)
        tape.backward(loss)
    clip_grad_norm(optimizer.params, settings.clip_norm)
    optimizer.step()
    return ce.item(), (trans.item() if trans is not None else None)


def fit(
    model: ComplementaryTransitionRecommender,
    splits: DatasetSplits,
    settings: TrainSettings,
    journal: Optional[TrainingJournal] = None,
    validate: Optional[Callable[[ComplementaryTransitionRecommender], float]] = None,
) -> FitResult:
    """
    Entraîne `model` et restaure ses meilleurs paramètres (NDCG@10 de validation).

    Args:
        validate: métrique de validation personnalisée (NDCG@10 sur splits.valid par défaut).
    """
    prefixes, targets = build_training_examples(splits.train, model.config.max_len)
    if not prefixes:
        raise TrainingError("Aucun exemple d'entraînement (séquences d'entraînement trop courtes).")
    if validate is None:
        def validate(m):
            return evaluate(m, splits.valid, ks=(10,), split="valid", batch_size=settings.eval_batch_size).ndcg(10)

    optimizer = Adam(model.parameters(), lr=settings.lr)
    order_rng = np.random.default_rng(settings.seed)
    result = FitResult(best_epoch=0, best_metric=float("-inf"), epochs_run=0)
    stale = 0
    logger.info(f"Entraînement : {len(prefixes)} exemples, lots de {settings.batch_size}, "
                f"jusqu'à {settings.epochs} époques (patience {settings.patience}).")

    for epoch in range(1, settings.epochs + 1):
        if not shared_state.is_running():
            logger.warning("Arrêt demandé : fin de l'entraînement.")
            break
        start = time.perf_counter()
        model.train()
        order = order_rng.permutation(len(prefixes))
        pipeline = BatchPipeline(prefixes, targets, order, settings.batch_size, model.config.max_len,
                                 np.random.default_rng([settings.seed, epoch]))
        ce_total, trans_total, n_seen, n_trans = 0.0, 0.0, 0, 0
        for batch in pipeline:
            ce_value, trans_value = train_step(model, batch, settings, optimizer)
            size = len(batch.targets)
            ce_total += ce_value * size
            n_seen += size
            if trans_value is not None:
                trans_total += trans_value * size
                n_trans += size
        model.eval()

        metric = float(validate(model))
        if not np.isfinite(metric):
            raise TrainingError(f"NDCG@10 de validation non fini à l'époque {epoch}.")
        record = {
            "epoch": epoch,
            "loss_ce": ce_total / n_seen,
            "loss_trans": trans_total / n_trans if n_trans else 0.0,
            "valid_ndcg10": metric,
            "seconds": time.perf_counter() - start,
        }
        result.history.append(record)
        result.epochs_run = epoch
        if journal is not None:
            journal.record_epoch(record)
        shared_state.record_epoch(record)
        logger.info(f"Époque {epoch}: L_CE={record['loss_ce']:.4f} L_Trans={record['loss_trans']:.4f} "
                    f"NDCG@10 valid={metric:.4f} ({record['seconds']:.1f}s)")

        if metric > result.best_metric:
            result.best_metric, result.best_epoch = metric, epoch
            result.best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
            if stale >= settings.patience:
                result.stopped_early = True
                logger.info(f"Arrêt anticipé après {epoch} époques (meilleure : {result.best_epoch}).")
                break

    if result.best_state is not None:
        model.load_state_dict(result.best_state)
    return result

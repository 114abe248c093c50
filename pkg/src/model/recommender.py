"""
Fichier: src/model/recommender.py
Recommandeur séquentiel à transitions sémantiques complémentaires.

Ce module gère :
- Les représentations d'items : embeddings des codes sémantiques aplatis par
  sous-espace, concaténés au texte projeté, puis fusionnés par un MLP.
- L'encodage causal des préfixes avec biais de transition λ·T(clé -> requête).
- Le score des candidats sur l'ensemble complet des items.

Version: 1.0
"""

__version__ = "1.0"

import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.model.encoder import attention_layer, attention_mask, init_layer_params
from src.model.transition import standardize, subspace_weights, transition_scores
from src.numcore import ShapeError, Tensor, ops

logger = logging.getLogger(__name__)

PAD = -1


@dataclass
class ModelConfig:
    num_items: int
    d_text: int
    num_subspaces: int
    codebook_size: int
    hidden: int = 128
    align_hidden: int = 256
    layers: int = 2
    heads: int = 2
    ffn: int = 256
    dropout: float = 0.2
    max_len: int = 20
    lambda_: float = 1.2
    epsilon: float = 1.0
    init_std: float = 0.02
    use_codes: bool = True
    use_alignment: bool = True
    seed: int = 0

    @classmethod
    def from_settings(cls, config: dict, effective: dict, num_items: int, d_text: int,
                      num_subspaces: int, codebook_size: int, max_len: int) -> "ModelConfig":
        m = config["model"]
        return cls(
            num_items=num_items, d_text=d_text, num_subspaces=num_subspaces, codebook_size=codebook_size,
            hidden=m["hidden"], align_hidden=m["align_hidden"], layers=m["layers"], heads=m["heads"],
            ffn=m["ffn"], dropout=float(m["dropout"]), max_len=max_len, lambda_=effective["lambda_"],
            epsilon=float(m["epsilon"]), init_std=float(m["init_std"]),
            use_codes=effective["use_codes"], use_alignment=effective["use_alignment"], seed=config["seed"],
        )

    def to_dict(self) -> dict:
        return asdict(self)


def pad_prefixes(prefixes: Sequence[Sequence[int]], max_len: int) -> np.ndarray:
    """Matrice (B, n) alignée à droite, complétée à gauche par PAD ; préfixes tronqués à max_len."""
    if not prefixes:
        raise ShapeError("pad_prefixes: lot vide")
    if any(len(p) == 0 for p in prefixes):
        raise ShapeError("Préfixe vide : au moins un item est requis.")
    n = min(max(len(p) for p in prefixes), max_len)
    out = np.full((len(prefixes), n), PAD, dtype=np.int64)
    for row, prefix in enumerate(prefixes):
        tail = list(prefix)[-n:]
        out[row, n - len(tail):] = tail
    return out


class ComplementaryTransitionRecommender:
    """
    Réseau complet : tables de codes, tête d'alignement, tenseur de transition,
    pile d'encodeurs et score plein catalogue.

    Args:
        config (ModelConfig): hyper-paramètres.
        codes (np.ndarray): codes sémantiques |V|×D.
        text_embeddings (np.ndarray): embeddings textuels réduits |V|×d_text.
        transition_prior (np.ndarray): valeurs initiales de T (D×C×C), None = ln ε partout.
    """

    def __init__(self, config: ModelConfig, codes: np.ndarray, text_embeddings: np.ndarray,
                 transition_prior: Optional[np.ndarray] = None):
        self.config = config
        self.codes = np.asarray(codes, dtype=np.int64)
        self.text = np.asarray(text_embeddings, dtype=np.float64)
        self._check_inputs()
        self.training = False
        self.rng = np.random.default_rng(config.seed)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._init_params(transition_prior)
        logger.info(
            f"Modèle initialisé : |V|={config.num_items}, d={config.hidden}, D={config.num_subspaces}, "
            f"C={config.codebook_size}, L={config.layers}, H={config.heads}, λ={config.lambda_}, "
            f"codes={'oui' if config.use_codes else 'non'}, alignement={'MLP' if config.use_alignment else 'moyenne'}, "
            f"{self.num_parameters()} paramètres."
        )

    # --- Construction ---

    def _check_inputs(self):
        c = self.config
        if self.codes.shape != (c.num_items, c.num_subspaces):
            raise ShapeError(f"codes de forme {self.codes.shape}, attendu {(c.num_items, c.num_subspaces)}")
        if self.codes.size and (self.codes.min() < 0 or self.codes.max() >= c.codebook_size):
            raise ShapeError(f"codes hors de [0, {c.codebook_size})")
        if self.text.shape != (c.num_items, c.d_text):
            raise ShapeError(f"embeddings textuels de forme {self.text.shape}, attendu {(c.num_items, c.d_text)}")
        if c.hidden % c.heads != 0:
            raise ShapeError(f"d={c.hidden} n'est pas divisible par H={c.heads}")

    def _add(self, name: str, value: np.ndarray):
        self.params[name] = Tensor(value, requires_grad=True, name=name)

    def _init_params(self, transition_prior: Optional[np.ndarray]):
        c = self.config
        rng = np.random.default_rng(c.seed)
        d, D, C = c.hidden, c.num_subspaces, c.codebook_size

        def normal(*shape):
            return rng.normal(0.0, c.init_std, size=shape)

        if c.use_codes:
            # Tables E^(k) empilées : la ligne k*C + m est E^(k)[m]
            self._add("code_embeddings", normal(D * C, d))
        self._add("w_proj", normal(c.d_text, d))
        if c.use_alignment:
            fused = (D + 1) * d if c.use_codes else d
            self._add("align_w1", normal(fused, c.align_hidden))
            self._add("align_b1", np.zeros(c.align_hidden))
            self._add("align_w2", normal(c.align_hidden, d))
            self._add("align_b2", np.zeros(d))
        self._add("positions", normal(c.max_len, d))
        for layer in range(c.layers):
            self.params.update(init_layer_params(f"layer{layer}", d, c.ffn, c.init_std, rng))
        if c.use_codes:
            if transition_prior is None:
                transition_prior = np.full((D, C, C), np.log(c.epsilon))
            if transition_prior.shape != (D, C, C):
                raise ShapeError(f"prior de transition de forme {transition_prior.shape}, attendu {(D, C, C)}")
            self._add("transition", np.array(transition_prior, dtype=np.float64))
            self._add("omega_logits", np.zeros(D))

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data.copy()) for name, p in self.params.items())

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        missing = set(self.params) - set(state)
        unexpected = set(state) - set(self.params)
        if missing or unexpected:
            raise ShapeError(f"État incompatible : manquants {sorted(missing)}, inattendus {sorted(unexpected)}")
        for name, p in self.params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"Paramètre {name} de forme {value.shape}, attendu {p.shape}")
            p.data = value.copy()

    # --- Transitions ---

    @property
    def has_transitions(self) -> bool:
        return self.config.use_codes

    def transition_view(self) -> Tuple[Tensor, Tensor]:
        """(P, ω) : T standardisé par sous-espace et poids des sous-espaces."""
        if not self.has_transitions:
            raise ShapeError("Modèle sans codes sémantiques : pas de tenseur de transition.")
        return standardize(self.params["transition"]), subspace_weights(self.params["omega_logits"])

    def pair_transition_scores(self, src_items: np.ndarray, dst_items: np.ndarray) -> Tensor:
        """T(src -> dst) pour des tableaux d'items de même forme."""
        P, omega = self.transition_view()
        return transition_scores(P, omega, self.codes[np.asarray(src_items)], self.codes[np.asarray(dst_items)])

    # --- Représentations ---

    def item_representations(self, items: Optional[np.ndarray] = None) -> Tensor:
        """h_i pour `items` (tous les items par défaut), forme (N, d)."""
        c = self.config
        idx = np.arange(c.num_items) if items is None else np.asarray(items, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= c.num_items):
            raise ShapeError(f"item hors de [0, {c.num_items})")
        z = Tensor(self.text[idx]) @ self.params["w_proj"]                     # (N, d)
        if not c.use_codes:
            flat = None
        else:
            offsets = np.arange(c.num_subspaces) * c.codebook_size
            e = ops.embedding_lookup(self.params["code_embeddings"], self.codes[idx] + offsets)  # (N, D, d)
            if not c.use_alignment:
                return ops.mean(e, axis=1) + z
            flat = ops.reshape(e, (len(idx), c.num_subspaces * c.hidden))
        if not c.use_alignment:
            return z
        x = z if flat is None else ops.concat([flat, z], axis=-1)
        hidden = ops.gelu(x @ self.params["align_w1"] + self.params["align_b1"])
        hidden = ops.dropout(hidden, c.dropout, self.training, self.rng)
        return hidden @ self.params["align_w2"] + self.params["align_b2"]

    def transition_bias(self, batch: np.ndarray) -> Optional[Tensor]:
        """
        Biais λ·T(v_j -> v_i) de forme (B, 1, n, n), calculé une fois par lot.
        None si λ = 0 ou sans codes.
        """
        c = self.config
        if not c.use_codes or c.lambda_ == 0.0:
            return None
        item_codes = self.codes[np.where(batch >= 0, batch, 0)]                # (B, n, D)
        P, omega = self.transition_view()
        # Clé j (axe 2) -> requête i (axe 1)
        scores = transition_scores(P, omega, item_codes[:, None, :, :], item_codes[:, :, None, :])
        B, n = batch.shape
        return ops.scale(ops.reshape(scores, (B, 1, n, n)), c.lambda_)

    def encode_sequences(self, batch: np.ndarray, item_reps: Optional[Tensor] = None,
                         attentions: Optional[List[np.ndarray]] = None) -> Tensor:
        """
        Représentation s (B, d) de chaque préfixe : état de la dernière position
        (non remplie) à la sortie de la dernière couche.

        Args:
            batch: préfixes (B, n) alignés à droite, PAD à gauche (voir pad_prefixes).
            item_reps: représentations de tous les items si déjà calculées.
        """
        c = self.config
        batch = np.asarray(batch, dtype=np.int64)
        if batch.ndim != 2 or batch.shape[1] == 0:
            raise ShapeError(f"lot de préfixes de forme {batch.shape} invalide")
        B, n = batch.shape
        if n > c.max_len:
            raise ShapeError(f"longueur {n} > max_len={c.max_len}")
        valid = batch >= 0
        if not valid[:, -1].all():
            raise ShapeError("Préfixe vide ou mal aligné : la dernière position doit être un item.")

        reps = self.item_representations() if item_reps is None else item_reps
        x = ops.embedding_lookup(reps, np.where(valid, batch, 0))              # (B, n, d)
        x = ops.mul(x, Tensor(valid[:, :, None].astype(np.float64)))
        x = x + ops.slice_(self.params["positions"], slice(c.max_len - n, c.max_len))

        mask = attention_mask(valid)
        bias = self.transition_bias(batch)
        for layer in range(c.layers):
            x = attention_layer(x, self.params, f"layer{layer}", c.heads, mask, bias=bias,
                                dropout=c.dropout, training=self.training, rng=self.rng,
                                attentions=attentions)
        return ops.reshape(ops.slice_(x, (slice(None), slice(n - 1, n), slice(None))), (B, c.hidden))

    def encode_sequence(self, prefix: Sequence[int]) -> Tensor:
        """s pour un seul préfixe (d,)."""
        s = self.encode_sequences(pad_prefixes([prefix], self.config.max_len))
        return ops.reshape(s, (self.config.hidden,))

    @staticmethod
    def score_candidates(s: Tensor, item_reps: Tensor, tau: float) -> Tensor:
        """logit_v = sᵀh_v / τ pour tous les candidats ; s de forme (B, d) ou (d,)."""
        if tau <= 0:
            raise ValueError(f"tau doit être > 0 (reçu {tau})")
        squeeze = s.ndim == 1
        s2 = ops.reshape(s, (1, s.shape[0])) if squeeze else s
        logits = ops.scale(s2 @ ops.transpose(item_reps), 1.0 / tau)
        return ops.reshape(logits, (item_reps.shape[0],)) if squeeze else logits

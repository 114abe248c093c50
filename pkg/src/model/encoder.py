"""
Fichier: src/model/encoder.py
Bloc Transformer causal à biais de transition additif.

Chaque couche : attention multi-tête (logits QKᵀ/√d_head + biais λ·T(clé -> requête),
softmax sur les positions j <= i non masquées), projection de sortie, dropout,
résiduel + LayerNorm, puis FFN (GeLU, dropout) avec résiduel + LayerNorm.
"""

import logging
from typing import Dict, List, Optional

import numpy as np

from src.numcore import Tensor, ops

logger = logging.getLogger(__name__)

LAYER_PARAMS = ("w_q", "w_k", "w_v", "w_o", "ln1_gamma", "ln1_beta",
                "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2", "ln2_gamma", "ln2_beta")


def init_layer_params(prefix: str, d: int, ffn: int, init_std: float, rng: np.random.Generator) -> Dict[str, Tensor]:
    def normal(*shape):
        return rng.normal(0.0, init_std, size=shape)

    values = {
        "w_q": normal(d, d), "w_k": normal(d, d), "w_v": normal(d, d), "w_o": normal(d, d),
        "ln1_gamma": np.ones(d), "ln1_beta": np.zeros(d),
        "ffn_w1": normal(d, ffn), "ffn_b1": np.zeros(ffn),
        "ffn_w2": normal(ffn, d), "ffn_b2": np.zeros(d),
        "ln2_gamma": np.ones(d), "ln2_beta": np.zeros(d),
    }
    return {f"{prefix}.{name}": Tensor(values[name], requires_grad=True, name=f"{prefix}.{name}") for name in LAYER_PARAMS}


def attention_mask(valid: np.ndarray) -> np.ndarray:
    """
    Masque booléen (B, 1, n, n) : True si la requête i peut voir la clé j,
    c'est-à-dire j <= i et les deux positions ne sont pas du remplissage.
    """
    n = valid.shape[1]
    causal = np.tril(np.ones((n, n), dtype=bool))
    return (causal[None, :, :] & valid[:, :, None] & valid[:, None, :])[:, None, :, :]


def _split_heads(x: Tensor, heads: int) -> Tensor:
    B, n, d = x.shape
    return ops.transpose(ops.reshape(x, (B, n, heads, d // heads)), (0, 2, 1, 3))


def attention_layer(
    x: Tensor,
    params: Dict[str, Tensor],
    prefix: str,
    heads: int,
    mask: np.ndarray,
    bias: Optional[Tensor] = None,
    dropout: float = 0.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    attentions: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """
    Args:
        x: états cachés (B, n, d).
        bias: biais de transition déjà multiplié par λ, forme (B, 1, n, n) ; None = attention standard.
        attentions: si fourni, reçoit les poids d'attention (B, H, n, n) de la couche.
    """
    p = {name: params[f"{prefix}.{name}"] for name in LAYER_PARAMS}
    B, n, d = x.shape
    if d % heads != 0:
        raise ValueError(f"d={d} n'est pas divisible par H={heads}")
    d_head = d // heads

    q = _split_heads(x @ p["w_q"], heads)
    k = _split_heads(x @ p["w_k"], heads)
    v = _split_heads(x @ p["w_v"], heads)
    logits = ops.scale(q @ ops.transpose(k), 1.0 / np.sqrt(d_head))
    weights = ops.softmax(logits, bias=bias, mask=mask)
    if attentions is not None:
        attentions.append(weights.data.copy())

    context = ops.reshape(ops.transpose(weights @ v, (0, 2, 1, 3)), (B, n, d))
    attended = ops.dropout(context @ p["w_o"], dropout, training, rng)
    h = ops.layer_norm(x + attended, p["ln1_gamma"], p["ln1_beta"])

    inner = ops.dropout(ops.gelu(h @ p["ffn_w1"] + p["ffn_b1"]), dropout, training, rng)
    ffn_out = inner @ p["ffn_w2"] + p["ffn_b2"]
    return ops.layer_norm(h + ffn_out, p["ln2_gamma"], p["ln2_beta"])

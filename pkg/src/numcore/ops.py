"""
Fichier: src/numcore/ops.py
Primitives différentiables du noyau numérique.

Chaque primitive calcule sa sortie avec numpy, vérifie qu'elle est finie,
puis (si un ruban est actif et qu'une entrée exige un gradient) enregistre
sa fonction de rétropropagation sur le ruban.

Version: 1.0
"""

__version__ = "1.0"

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp

from src.numcore.tensor import DTYPE, NumericalError, ShapeError, Tensor, active_tape

logger = logging.getLogger(__name__)

# Constantes de l'approximation tanh de GeLU
GELU_COEF = float(np.sqrt(2.0 / np.pi))
GELU_CUBIC = 0.044715


def _wrap(data: np.ndarray, requires_grad: bool = False) -> Tensor:
    """Construit un Tensor sans recopier `data`."""
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=DTYPE)
    out.requires_grad = requires_grad
    out.grad = None
    out.name = None
    return out


def _result(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"Résultat non fini produit par '{op}'.")
    needs_grad = any(t.requires_grad for t in inputs)
    tape = active_tape()
    out = _wrap(data, requires_grad=needs_grad and tape is not None)
    if out.requires_grad:
        tape.record(op, inputs, out, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Somme `g` sur les axes diffusés pour revenir à `shape`."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op: str, *shapes) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeError(f"{op}: formes incompatibles {' , '.join(str(s) for s in shapes)}") from None


# --- Algèbre linéaire et arithmétique ---

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: formes incompatibles {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (
            _unbroadcast(ga, a.shape) if ga is not None else None,
            _unbroadcast(gb, b.shape) if gb is not None else None,
        )

    return _result("matmul", out, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a.shape, b.shape)
    out = a.data + b.data
    return _result("add", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a.shape, b.shape)
    out = a.data - b.data
    return _result("sub", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Produit élément par élément."""
    _broadcast_shape("mul", a.shape, b.shape)
    out = a.data * b.data
    return _result(
        "mul", out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    """Multiplication par un scalaire constant."""
    c = float(c)
    return _result("scale", a.data * c, (a,), lambda g: (g * c,))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat: liste vide")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat: formes incompatibles {[x.shape for x in tensors]} sur l'axe {axis}")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result("concat", out, tuple(tensors), backward)


# --- Indexation et forme ---

def embedding_lookup(table: Tensor, index) -> Tensor:
    """Lignes `table[index]` ; la sortie a la forme index.shape + (dim,)."""
    index = np.asarray(index)
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup: table 2-D attendue, forme {table.shape}")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: index hors bornes [0, {table.shape[0]}) pour la table {table.name or ''}")
    out = table.data[index]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, index, g)
        return (gt,)

    return _result("embedding_lookup", out, (table,), backward)


def _has_array_index(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return any(isinstance(p, (np.ndarray, list)) for p in parts)


def _scatter_add(shape: Tuple[int, ...], key, g: np.ndarray) -> np.ndarray:
    parts = key if isinstance(key, tuple) else (key,)
    if len(parts) == len(shape) and all(isinstance(p, (np.ndarray, list)) for p in parts):
        # Indexation avancée pure : bincount sur les indices linéarisés
        arrays = np.broadcast_arrays(*[np.asarray(p) for p in parts])
        flat = np.ravel_multi_index(arrays, shape)
        size = int(np.prod(shape))
        return np.bincount(flat.ravel(), weights=g.ravel(), minlength=size).reshape(shape)
    gx = np.zeros(shape, dtype=DTYPE)
    np.add.at(gx, key, g)
    return gx


def slice_(x: Tensor, key) -> Tensor:
    """Indexation numpy (tranches ou tableaux d'indices) différentiable."""
    try:
        out = x.data[key]
    except IndexError as e:
        raise ShapeError(f"slice: index invalide pour la forme {x.shape} ({e})") from None
    fancy = _has_array_index(key)

    def backward(g):
        if fancy:
            return (_scatter_add(x.shape, key, g),)
        gx = np.zeros_like(x.data)
        gx[key] += g
        return (gx,)

    return _result("slice", np.array(out, dtype=DTYPE), (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: impossible de passer de {x.shape} à {shape}") from None
    return _result("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    """Permutation d'axes ; sans `axes`, échange les deux derniers."""
    if axes is None:
        axes = list(range(x.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


# --- Non-linéarités ---

def softmax(x: Tensor, bias: Optional[Tensor] = None, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax sur le dernier axe de `x + bias`.

    `mask` (booléen, diffusable) vaut True pour les positions autorisées ;
    une ligne entièrement masquée produit des zéros.
    """
    z = x.data if bias is None else x.data + bias.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=-1, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    e = np.exp(z - zmax)
    total = e.sum(axis=-1, keepdims=True)
    y = np.divide(e, total, out=np.zeros_like(e), where=total > 0)

    def backward(g):
        gz = y * (g - (g * y).sum(axis=-1, keepdims=True))
        gx = _unbroadcast(gz, x.shape)
        if bias is None:
            return (gx,)
        return (gx, _unbroadcast(gz, bias.shape))

    inputs = (x,) if bias is None else (x, bias)
    return _result("softmax", y, inputs, backward)


def gelu(x: Tensor) -> Tensor:
    """GeLU, approximation tanh : 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))."""
    u = GELU_COEF * (x.data + GELU_CUBIC * x.data ** 3)
    t = np.tanh(u)
    out = 0.5 * x.data * (1.0 + t)

    def backward(g):
        du = GELU_COEF * (1.0 + 3.0 * GELU_CUBIC * x.data ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * du),)

    return _result("gelu", out, (x,), backward)


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Dropout inversé ; identité en évaluation ou pour rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: taux {rate} hors de [0, 1)")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: un générateur aléatoire est requis en entraînement")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result("dropout", x.data * keep, (x,), lambda g: (g * keep,))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} pour une dernière dimension {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data

    def backward(g):
        reduce_axes = tuple(range(x.ndim - 1))
        dxhat = g * gamma.data
        gx = inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=reduce_axes), g.sum(axis=reduce_axes)

    return _result("layer_norm", out, (x, gamma, beta), backward)


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data)
    return _result("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def log_sigmoid(x: Tensor) -> Tensor:
    """log σ(x) = −log(1 + e^{−x}), stable pour les grandes valeurs négatives."""
    out = -np.logaddexp(0.0, -x.data)
    return _result("log_sigmoid", out, (x,), lambda g: (g * expit(-x.data),))


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _result("log", out, (x,), lambda g: (g / x.data,))


def cross_entropy_from_logits(logits: Tensor, targets) -> Tensor:
    """Moyenne sur les lignes de −log softmax(logits)[cible]."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} et cibles {targets.shape} incompatibles")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ShapeError(f"cross_entropy: cible hors de [0, {logits.shape[1]})")
    n = logits.shape[0]
    rows = np.arange(n)
    lse = logsumexp(logits.data, axis=1)
    out = np.mean(lse - logits.data[rows, targets])

    def backward(g):
        probs = np.exp(logits.data - lse[:, None])
        probs[rows, targets] -= 1.0
        return (g * probs / n,)

    return _result("cross_entropy", np.asarray(out), (logits,), backward)


# --- Réductions ---

def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result("sum", np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _result("mean", np.asarray(out), (x,), backward)


def zscore(x: Tensor, axes: Tuple[int, ...], min_std: float = 1e-8) -> Tensor:
    """
    Standardisation (x − moyenne) / écart-type (population) sur `axes`.
    Une tranche d'écart-type < min_std devient 0, gradient nul.
    """
    axes = tuple(axes)
    mu = x.data.mean(axis=axes, keepdims=True)
    centered = x.data - mu
    std = np.sqrt((centered ** 2).mean(axis=axes, keepdims=True))
    flat = std < min_std
    safe_std = np.where(flat, 1.0, std)
    y = np.where(flat, 0.0, centered / safe_std)

    def backward(g):
        gx = (g - g.mean(axis=axes, keepdims=True) - y * (g * y).mean(axis=axes, keepdims=True)) / safe_std
        return (np.where(flat, 0.0, gx),)

    return _result("zscore", y, (x,), backward)

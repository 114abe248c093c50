"""
Fichier: src/numcore/tensor.py
Noyau tensoriel dense avec différentiation en mode inverse.

Ce module définit :
- Tensor : un tableau numpy contigu (row-major) avec un tampon de gradient optionnel.
- ComputationTape : l'enregistrement ordonné des opérations exécutées,
  parcouru une seule fois en sens inverse par backward().

Les opérations elles-mêmes vivent dans src/numcore/ops.py.

Version: 1.0
"""

__version__ = "1.0"

import logging
import threading
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

DTYPE = np.float64


class ShapeError(ValueError):
    """Formes incompatibles pour une opération."""


class NumericalError(ArithmeticError):
    """Valeur NaN/Inf produite par une opération."""


class TapeError(RuntimeError):
    """Usage invalide du ruban (perte non scalaire, double backward, graphe détaché)."""


class Tensor:
    """
    Tableau dense réel avec gradient optionnel.

    Args:
        data: valeurs (tout objet convertible par numpy).
        requires_grad (bool): si True, backward() remplit self.grad.
        name (str): nom lisible (utilisé dans les diagnostics).
    """

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() exige un tenseur à un élément, forme reçue {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise ShapeError(f"Gradient de forme {g.shape} pour le tenseur {self.name or ''} de forme {self.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE)
        else:
            self.grad = self.grad + g

    def backward(self):
        """Rétropropage depuis ce scalaire sur le ruban actif."""
        tape = active_tape()
        if tape is None:
            raise TapeError("backward() appelé sans ruban actif (graphe détaché).")
        tape.backward(self)

    # Sucre syntaxique : délègue aux primitives de ops.py
    def __add__(self, other):
        from src.numcore import ops
        return ops.add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        from src.numcore import ops
        return ops.sub(self, _as_tensor(other))

    def __neg__(self):
        from src.numcore import ops
        return ops.scale(self, -1.0)

    def __mul__(self, other):
        from src.numcore import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        from src.numcore import ops
        return ops.matmul(self, _as_tensor(other))

    def __getitem__(self, key):
        from src.numcore import ops
        return ops.slice_(self, key)

    def __repr__(self):
        label = f" '{self.name}'" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class TapeRecord:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


_local = threading.local()


def _tape_stack() -> List["ComputationTape"]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional["ComputationTape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class ComputationTape:
    """
    Ruban d'opérations, à utiliser comme gestionnaire de contexte :

        with ComputationTape() as tape:
            loss = f(params)
            tape.backward(loss)

    Un ruban par thread ; des rubans indépendants peuvent tourner en parallèle.
    """

    def __init__(self):
        self.records: List[TapeRecord] = []
        self._consumed = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_fn):
        if self._consumed:
            raise TapeError(f"Ruban déjà consommé : appeler reset() avant d'enregistrer '{op}'.")
        self.records.append(TapeRecord(op, inputs, output, backward_fn))

    def reset(self):
        self.records = []
        self._consumed = False

    def backward(self, loss: Tensor):
        """
        Remplit .grad pour chaque tenseur requires_grad atteint depuis `loss`.
        Chaque enregistrement est visité exactement une fois, en ordre inverse.
        """
        if self._consumed:
            raise TapeError("backward() déjà appelé sur ce ruban ; appeler reset() d'abord.")
        if loss.data.size != 1:
            raise TapeError(f"La perte doit être scalaire, forme reçue {loss.shape}.")
        if not loss.requires_grad or not any(rec.output is loss for rec in self.records):
            raise TapeError("La perte n'a pas été produite sur ce ruban (graphe détaché).")

        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for rec in reversed(self.records):
            g_out = rec.output.grad
            if g_out is None:
                continue
            in_grads = rec.backward_fn(g_out)
            for tensor, g in zip(rec.inputs, in_grads):
                if g is None or not tensor.requires_grad:
                    continue
                if not np.all(np.isfinite(g)):
                    raise NumericalError(f"Gradient non fini dans la rétropropagation de '{rec.op}'.")
                tensor.accumulate_grad(g)

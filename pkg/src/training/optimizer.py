"""
Fichier: src/training/optimizer.py
Optimiseur Adam (moments corrigés du biais) et écrêtage par norme globale.
"""

import logging
from typing import List, Sequence

import numpy as np

from src.numcore import Tensor

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Échec de l'entraînement (gradient ou métrique non finis)."""


class Adam:
    """
    Args:
        params: tenseurs à optimiser (grad rempli par backward()).
        lr (float): pas d'apprentissage.
    """

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params: List[Tensor] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        grads = []
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"Gradient non fini pour le paramètre '{p.name}'.")
            grads.append(g)

        self.step_count += 1
        t = self.step_count
        for i, (p, g) in enumerate(zip(self.params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1 ** t)
            v_hat = self.v[i] / (1.0 - self.beta2 ** t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Ramène la norme globale des gradients à `max_norm` ; retourne la norme avant écrêtage."""
    total = float(np.sqrt(sum(float((p.grad ** 2).sum()) for p in params if p.grad is not None)))
    if not np.isfinite(total):
        offenders = [p.name for p in params if p.grad is not None and not np.all(np.isfinite(p.grad))]
        raise TrainingError(f"Norme de gradient non finie (paramètres : {offenders}).")
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return total

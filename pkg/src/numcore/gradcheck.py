"""
Fichier: src/numcore/gradcheck.py
Vérification des gradients analytiques par différences finies centrées.
"""

import logging
from typing import Callable, Dict, Sequence

import numpy as np

from src.numcore.tensor import ComputationTape, Tensor

logger = logging.getLogger(__name__)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def finite_difference_report(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-4,
                             floor: float = 1e-8) -> Dict[str, float]:
    """
    Erreur relative maximale par paramètre entre gradient analytique et
    différences finies (f(p+h) − f(p−h)) / 2h.

    `f` doit être déterministe (dropout désactivé) et reconstruire son graphe
    à chaque appel.
    """
    for p in params:
        p.zero_grad()
    with ComputationTape() as tape:
        loss = f()
        if loss.requires_grad:
            tape.backward(loss)

    report = {}
    for idx, p in enumerate(params):
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            f_plus = f().item()
            flat[i] = original - h
            f_minus = f().item()
            flat[i] = original
            numeric.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * h)
        err = float(_relative_error(analytic, numeric, floor).max()) if p.data.size else 0.0
        report[p.name or f"param_{idx}"] = err
        logger.debug(f"Gradcheck {p.name or idx}: erreur relative max {err:.3e}")
    return report


def finite_difference_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-4, tol: float = 1e-4,
                            floor: float = 1e-8) -> float:
    """Erreur relative maximale sur tous les paramètres ; avertit au-delà de `tol`."""
    report = finite_difference_report(f, params, h=h, floor=floor)
    worst = max(report.values()) if report else 0.0
    if worst > tol:
        offenders = {k: v for k, v in report.items() if v > tol}
        logger.warning(f"Gradcheck au-delà de la tolérance {tol}: {offenders}")
    return worst

"""
Fichier: src/relations/scorers.py
Backends de score de complémentarité (CompScore) entre deux items.

Ce module gère :
- FileScorer : scores pré-calculés lus depuis un fichier JSON Lines.
- MockScorer : règle déterministe (bundle planté ou dernier tag de catégorie).
- HttpScorer : point d'accès de type chat-completions, avec relances exponentielles.
- La répartition concurrente des requêtes et le rassemblement ordonné des scores.

Version: 1.0
"""

__version__ = "1.0"

import json
import logging
import os
import re
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional, Tuple

import backoff
import requests

from src.constants import MOCK_SCORE_RELATED, MOCK_SCORE_UNRELATED
from src.data_ingest.corpus import CorpusFormatError, Item, build_text_feature

logger = logging.getLogger(__name__)

_NUMBER = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")

PROMPT_TEMPLATE = """Task Description: You are an assistant who determines to what extent two products are complementary on a [0, 1] scale.

Evaluation Criteria:
1. Direct Interaction: Are they often used together for the same intent?
2. Functional Enhancement: Does one enhance the functionality of the other?
3. Market Relationship: Considerations of market co-occurrence.

Input:
- Product 1: {product_1}
- Product 2: {product_2}

Output Requirements:
1. Step-by-step reasoning referencing the criteria.
2. A single numeric score from 0 to 1."""


class ScorerError(ConnectionError):
    """Échec définitif d'un backend de score pour une paire."""


def build_prompt(item_a: Item, item_b: Item) -> str:
    return PROMPT_TEMPLATE.format(product_1=build_text_feature(item_a), product_2=build_text_feature(item_b))


def parse_score(text: str) -> Optional[float]:
    """Dernier nombre de la réponse, s'il est dans [0, 1] ; sinon None."""
    matches = _NUMBER.findall(text or "")
    if not matches:
        return None
    value = float(matches[-1])
    return value if 0.0 <= value <= 1.0 else None


class ScorerBackend(ABC):
    """Interface commune : score(a, b) dans [0, 1], ou None si la réponse est inexploitable."""

    name = "abstract"

    @abstractmethod
    def score(self, item_a: Item, item_b: Item) -> Optional[float]:
        ...

    def close(self):
        pass


class MockScorer(ScorerBackend):
    """0.9 si les items partagent un tag de bundle ou leur dernier tag de catégorie, 0.1 sinon."""

    name = "mock"

    def __init__(self, related: float = MOCK_SCORE_RELATED, unrelated: float = MOCK_SCORE_UNRELATED):
        self.related = related
        self.unrelated = unrelated

    @staticmethod
    def _tags(item: Item):
        bundles = {c.strip() for c in item.categories if c.strip().startswith("bundle-")}
        trailing = item.categories[-1].strip() if item.categories and item.categories[-1].strip() else None
        return bundles, trailing

    def score(self, item_a: Item, item_b: Item) -> float:
        bundles_a, trailing_a = self._tags(item_a)
        bundles_b, trailing_b = self._tags(item_b)
        if bundles_a & bundles_b or (trailing_a is not None and trailing_a == trailing_b):
            return self.related
        return self.unrelated


class FileScorer(ScorerBackend):
    """Scores lus depuis `{"i": item_id, "j": item_id, "w": float}` ; paire absente -> 0."""

    name = "file"

    def __init__(self, path: str):
        if not os.path.exists(path):
            raise FileNotFoundError(f"Fichier de scores introuvable: {path}")
        self.path = path
        self.scores: Dict[Tuple[str, str], float] = {}
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key, w = (str(obj["i"]), str(obj["j"])), float(obj["w"])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                    raise CorpusFormatError(path, line_number, f"enregistrement de score invalide ({e})") from None
                if not 0.0 <= w <= 1.0:
                    raise CorpusFormatError(path, line_number, f"score {w} hors de [0, 1]")
                self.scores[key] = w
        self.misses = 0
        logger.info(f"{len(self.scores)} scores chargés depuis {path}")

    def score(self, item_a: Item, item_b: Item) -> float:
        key = (item_a.item_id, item_b.item_id)
        if key in self.scores:
            return self.scores[key]
        if key[::-1] in self.scores:
            return self.scores[key[::-1]]
        self.misses += 1
        return 0.0


class HttpScorer(ScorerBackend):
    """
    Client chat-completions : POST {model, messages:[{role: "user", content: prompt}]}.
    Le jeton Bearer est lu dans la variable d'environnement `token_env`.
    """

    name = "http"

    def __init__(self, url: str, model: str, token_env: str = "", timeout: float = 60.0,
                 max_tries: int = 5, backoff_factor: float = 1.0):
        self.url = url
        self.model = model
        self.timeout = timeout
        self.session = requests.Session()
        token = os.environ.get(token_env) if token_env else None
        if token:
            self.session.headers["Authorization"] = f"Bearer {token}"
        elif token_env:
            logger.warning(f"Variable d'environnement {token_env} absente : requêtes sans authentification.")
        self._post = backoff.on_exception(
            backoff.expo,
            requests.RequestException,
            max_tries=max_tries,
            factor=backoff_factor,
            logger=logger,
        )(self._post_once)

    def _post_once(self, prompt: str) -> Optional[str]:
        body = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        response = self.session.post(self.url, json=body, timeout=self.timeout)
        response.raise_for_status()
        # requests.JSONDecodeError hérite de RequestException : l'intercepter ici évite les relances
        try:
            data = response.json()
        except ValueError as e:
            logger.warning(f"Corps de réponse non JSON ({e}).")
            return None
        return data["choices"][0]["message"]["content"]

    def score(self, item_a: Item, item_b: Item) -> Optional[float]:
        try:
            content = self._post(build_prompt(item_a, item_b))
        except requests.RequestException as e:
            raise ScorerError(f"Échec du score pour la paire ({item_a.item_id}, {item_b.item_id}) après relances: {e}") from e
        except (KeyError, IndexError, TypeError, ValueError) as e:
            logger.warning(f"Réponse inexploitable pour ({item_a.item_id}, {item_b.item_id}): {e}")
            return None
        if content is None:
            return None
        value = parse_score(content)
        if value is None:
            logger.warning(f"Aucun score dans [0, 1] pour ({item_a.item_id}, {item_b.item_id}) : paire ignorée.")
        return value

    def close(self):
        self.session.close()


def build_scorer(miner_settings: dict, scores_path: str) -> ScorerBackend:
    backend = miner_settings["backend"]
    if backend == "mock":
        return MockScorer()
    if backend == "file":
        return FileScorer(scores_path)
    http = miner_settings["http"]
    return HttpScorer(http["url"], http["model"], http["token_env"], http["timeout"], http["max_tries"])


def score_pair(backend: ScorerBackend, item_a: Item, item_b: Item) -> Optional[float]:
    return backend.score(item_a, item_b)


def score_pairs(backend: ScorerBackend, pairs: Iterable[Tuple[int, int]], items: List[Item],
                max_in_flight: int = 1) -> Dict[Tuple[int, int], float]:
    """
    Score chaque paire (au plus `max_in_flight` requêtes simultanées).
    Résultat ordonné par clé de paire ; les paires inexploitables sont absentes.
    """
    ordered = sorted(pairs)
    if max_in_flight > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            values = list(pool.map(lambda p: score_pair(backend, items[p[0]], items[p[1]]), ordered))
    else:
        values = [score_pair(backend, items[i], items[j]) for i, j in ordered]
    skipped = sum(v is None for v in values)
    if skipped:
        logger.warning(f"{skipped} paire(s) ignorée(s) : réponse du scoreur inexploitable.")
    return {pair: float(v) for pair, v in zip(ordered, values) if v is not None}

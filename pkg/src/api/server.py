# Fichier: src/api/server.py
# Version: 2.0
# Description: Serveur Flask local : scoreur de complémentarité compatible
#              chat-completions (règle mock) et statut du pipeline.

import logging
import re
from typing import Dict, List, Optional

from flask import Flask, jsonify, request

from src.data_ingest.corpus import Item, build_text_feature
from src.relations.scorers import MockScorer

log = logging.getLogger(__name__)

_PRODUCT_LINE = re.compile(r"^- Product ([12]):\s*(.*)$", re.MULTILINE)
_BUNDLE_TAG = re.compile(r"bundle-\d+")


def extract_products(prompt: str) -> Optional[List[str]]:
    """Textes des deux produits du prompt, ou None si le prompt ne suit pas le gabarit."""
    found = dict(_PRODUCT_LINE.findall(prompt or ""))
    if "1" not in found or "2" not in found:
        return None
    return [found["1"].strip(), found["2"].strip()]


def _item_from_text(text: str, catalog: Dict[str, Item]) -> Item:
    if text in catalog:
        return catalog[text]
    # Produit inconnu : seuls les tags de bundle lisibles dans le texte comptent
    return Item(item_id=text, categories=sorted(set(_BUNDLE_TAG.findall(text))))


def create_app(shared_state, items: Optional[List[Item]] = None) -> Flask:
    """
    Args:
        shared_state: module d'état partagé exposé par /api/data.
        items: catalogue permettant de retrouver un item depuis son texte.
    """
    app = Flask(__name__)
    logging.getLogger("werkzeug").setLevel(logging.ERROR)
    catalog = {build_text_feature(item): item for item in items or []}
    scorer = MockScorer()

    @app.route("/api/data")
    def get_all_data():
        return jsonify(shared_state.get_all_data())

    @app.route("/v1/chat/completions", methods=["POST"])
    def chat_completions():
        body = request.get_json(silent=True) or {}
        messages = body.get("messages") or []
        prompt = messages[-1].get("content", "") if messages and isinstance(messages[-1], dict) else ""
        products = extract_products(prompt)
        if products is None:
            return jsonify({"error": "prompt sans 'Product 1' / 'Product 2'"}), 400
        a, b = (_item_from_text(text, catalog) for text in products)
        score = scorer.score(a, b)
        shared_state.add_log(f"Score {score:.1f} pour ({a.item_id}, {b.item_id})")
        content = (
            "Direct interaction, functional enhancement and market co-occurrence were considered.\n"
            f"Score: {score}"
        )
        return jsonify({
            "model": body.get("model", "mock"),
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}],
        })

    return app


def start_api_server(shared_state, items: Optional[List[Item]] = None):
    config = shared_state.get_config()
    host = config.get("api", {}).get("host", "127.0.0.1")
    port = config.get("api", {}).get("port", 5055)
    app = create_app(shared_state, items)
    try:
        log.info(f"Démarrage du serveur API Flask sur http://{host}:{port}...")
        shared_state.set_status("SERVING", f"Scoreur mock sur {host}:{port}", stage="serve-scorer")
        app.run(host=host, port=port, debug=False, use_reloader=False)
    except Exception as e:
        log.critical(f"ÉCHEC CRITIQUE DU SERVEUR API: {e}", exc_info=True)
        raise

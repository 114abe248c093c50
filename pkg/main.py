# Fichier: main.py
"""
semtrans - Recommandeur séquentiel à transitions sémantiques complémentaires
Point d'entrée en ligne de commande du pipeline.

Version: 1.0
"""

__version__ = "1.0"

import argparse
import logging
import os
import sys
from datetime import datetime

from src import shared_state
from src.constants import LOG_FILENAME, LOG_FORMAT, TEST_SPLIT, VALID_SPLIT
from src.settings import ConfigValidationError, apply_overrides, load_config

logger = logging.getLogger(__name__)

ABLATION_FLAGS = {
    "no_sem_codes": "--no-sem-codes",
    "no_alignment": "--no-alignment",
    "no_trans_guide": "--no-trans-guide",
}


def setup_logging(log_dir: str = "logs"):
    """Journal fichier (logs/semtrans.log) + sortie standard."""
    os.makedirs(log_dir, exist_ok=True)
    logging.basicConfig(
        level=logging.INFO,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(os.path.join(log_dir, LOG_FILENAME)),
            logging.StreamHandler(sys.stdout),
        ],
    )


def log_to_api(message: str):
    """Envoie un message de log à l'état partagé (pour l'API)."""
    logger.info(message)
    shared_state.add_log(f"[{datetime.now().strftime('%H:%M:%S')}] {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="fichier de configuration YAML (ou JSON)")
    common.add_argument("--seed", type=int, help="remplace `seed` de la configuration")
    common.add_argument("--out", help="remplace `paths.out_dir`")
    for flag in ABLATION_FLAGS.values():
        common.add_argument(flag, action="store_true")

    parser = argparse.ArgumentParser(prog="semtrans", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synth", "prepare-data", "build-codes", "mine-relations", "train", "analyze-transitions",
                 "run-all", "serve-scorer"):
        sub.add_parser(name, parents=[common])
    evaluate = sub.add_parser("evaluate", parents=[common])
    evaluate.add_argument("--split", choices=(VALID_SPLIT, TEST_SPLIT), default=TEST_SPLIT)
    ablate = sub.add_parser("ablate", parents=[common])
    ablate.add_argument("--seeds", help="graines séparées par des virgules (défaut : experiments.seeds)")
    sweep = sub.add_parser("sweep", parents=[common])
    sweep.add_argument("--grid", required=True, help="nom=v1,v2,... (lambda_, dropout, gamma, tau)")
    timing = sub.add_parser("time", parents=[common])
    timing.add_argument("--epochs", type=int, default=2)
    return parser


def resolve_config(args) -> dict:
    config = load_config(args.config)
    ablations = [name for name in ABLATION_FLAGS if getattr(args, name)]
    config = apply_overrides(config, seed=args.seed, out_dir=args.out, ablations=ablations)
    logging.getLogger().setLevel(config["logging"]["level"].upper())
    shared_state.set_config(config)
    return config


def dispatch(args, config: dict):
    # Imports tardifs : `--help` et les erreurs de configuration restent rapides
    from src.experiments import runner
    from src.pipeline import stages
    from src.pipeline.artifacts import RunPaths

    paths = RunPaths.from_config(config)
    command = args.command
    if command == "synth":
        stages.run_synth(config, paths)
    elif command == "prepare-data":
        stages.run_prepare_data(config, paths)
    elif command == "build-codes":
        stages.run_build_codes(config, paths)
    elif command == "mine-relations":
        stages.run_mine_relations(config, paths)
    elif command == "train":
        stages.run_train(config, paths)
    elif command == "evaluate":
        stages.run_evaluate(config, paths, args.split)
    elif command == "analyze-transitions":
        stages.run_analyze_transitions(config, paths)
    elif command == "run-all":
        stages.run_all(config, paths)
    elif command == "ablate":
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else config["experiments"]["seeds"]
        runner.run_ablation(config, seeds)
    elif command == "sweep":
        parameter, values = runner.parse_grid(args.grid)
        runner.run_sweep(config, parameter, values)
    elif command == "time":
        runner.run_timing(config, epochs=args.epochs)
    elif command == "serve-scorer":
        from src.api import server as api_server
        items = stages.load_prepared(paths).items if os.path.exists(paths.dataset) else None
        api_server.start_api_server(shared_state, items)


def main(argv=None) -> int:
    """Code de sortie : 0 succès, 2 configuration invalide, 1 autre échec."""
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        log_to_api(f"semtrans v{__version__} : sous-commande `{args.command}`")
        dispatch(args, config)
    except ConfigValidationError as e:
        logger.critical(str(e))
        shared_state.set_status("INVALID_CONFIG", str(e), stage=args.command)
        return 2
    except KeyboardInterrupt:
        logger.info("Arrêt manuel demandé (KeyboardInterrupt)...")
        shared_state.request_stop()
        return 1
    except Exception as e:
        logger.critical(f"Échec de `{args.command}`: {e}", exc_info=True)
        shared_state.set_status("CRASHED", str(e), stage=args.command)
        return 1
    shared_state.set_status("DONE", f"`{args.command}` terminé.", stage=args.command)
    logger.info("Programme principal terminé.")
    return 0


if __name__ == "__main__":
    setup_logging()
    sys.exit(main())

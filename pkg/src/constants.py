# Fichier: src/constants.py
# Version: 1.0
#
# Définit les constantes globales utilisées à travers l'application.

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_FILENAME = "semtrans.log"
MAX_LOG_ENTRIES = 200

# --- Formats binaires (little-endian) ---
EMBEDDING_MAGIC = b"EMB1"
CODES_MAGIC = b"SID1"
CODEBOOK_MAGIC = b"OPQ1"
CHECKPOINT_MAGIC = b"CAST"
CHECKPOINT_VERSION = 1

# --- Noms des artefacts d'un run (relatifs à paths.out_dir) ---
ARTIFACT_DATASET = "dataset.json"
ARTIFACT_DATASET_STATS = "dataset_stats.json"
ARTIFACT_SPLITS = "splits_{split}.jsonl"
ARTIFACT_TEXT_EMBEDDINGS = "item_text.emb"
ARTIFACT_CODEBOOK = "codebook.opq"
ARTIFACT_TRAIN_LOG = "train_log.jsonl"
ARTIFACT_METRICS = "metrics_{split}.json"
ARTIFACT_TRANSITIONS = "transitions.json"
META_SUFFIX = ".meta.json"

# Sous-commande productrice de chaque artefact (pour les messages d'erreur)
PRODUCERS = {
    "interactions": "synth",
    "items": "synth",
    "embeddings": "synth",
    ARTIFACT_DATASET: "prepare-data",
    ARTIFACT_TEXT_EMBEDDINGS: "build-codes",
    ARTIFACT_CODEBOOK: "build-codes",
    "codes": "build-codes",
    "relations": "mine-relations",
    "checkpoints": "train",
}

# --- Évaluation ---
VALID_SPLIT = "valid"
TEST_SPLIT = "test"

# --- Scoreur mock ---
MOCK_SCORE_RELATED = 0.9
MOCK_SCORE_UNRELATED = 0.1

# Variantes d'ablation (drapeaux de config.yaml, section `ablation`)
ABLATION_VARIANTS = ("full", "no_sem_codes", "no_alignment", "no_trans_guide")

# Paramètres acceptés par la sous-commande `sweep` -> clé dans config.yaml
SWEEP_PARAMETERS = {
    "lambda_": ("model", "lambda_"),
    "dropout": ("model", "dropout"),
    "gamma": ("train", "gamma"),
    "tau": ("train", "tau"),
}

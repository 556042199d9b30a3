import json
import os
import sys
import threading
import uuid
from datetime import datetime
from enum import Enum

from colorama import Fore, Style

# Journal d'expériences (surchargeable par FPFORGE_LOG_FILE ou configure())
LOG_FILE = os.getenv("FPFORGE_LOG_FILE", os.path.join("logs", "experiment_data.json"))

_JSON_MODE = False
_LOCK = threading.Lock()

_COLORS = {
    "info": Fore.CYAN,
    "success": Fore.GREEN,
    "warning": Fore.YELLOW,
    "error": Fore.RED,
}


class ActionType(str, Enum):
    """
    Familles d'opérations consignées dans le journal d'expériences.
    """
    BINARIZE = "BINARIZE"   # Seuillage Sauvola, masque de premier plan
    UNFOLD = "UNFOLD"       # Redressement, découpage, dépliage UV
    PROJECT = "PROJECT"     # Rotation, Δu, rastérisation
    SAMPLE = "SAMPLE"       # Bruitage / échantillonnage DDIM / VQ
    FILTER = "FILTER"       # Filtrage qualité et premier plan
    SWEEP = "SWEEP"         # Balayage des poses d'un lot
    CONFIG = "CONFIG"       # Chargement de configuration


def configure(json_mode: bool = False, log_file: str = None):
    """
    Configure la sortie console et, optionnellement, le fichier de logs.

    Args:
        json_mode: True pour émettre une ligne JSON par message sur stderr.
        log_file: Nouveau chemin du journal d'expériences.
    """
    global _JSON_MODE
    _JSON_MODE = json_mode
    if log_file:
        set_log_file(log_file)


def set_log_file(path: str):
    global LOG_FILE
    LOG_FILE = path


def console(message: str, level: str = "info", **fields):
    """Affiche un message sur stderr (jamais sur stdout : réservé aux données)."""
    if _JSON_MODE:
        record = {"level": level, "message": message, **fields}
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
    else:
        color = _COLORS.get(level, "")
        suffix = "".join(f" {key}={value}" for key, value in fields.items())
        line = f"{color}{message}{Style.RESET_ALL}{suffix}"
    with _LOCK:
        print(line, file=sys.stderr, flush=True)


def log_experiment(component: str, action: ActionType, details: dict, status: str):
    """
    Enregistre une opération dans le journal d'expériences.

    Args:
        component (str): Module émetteur (ex: "sauvola", "pipeline").
        action (ActionType): Famille d'opération (membre ou valeur de ActionType).
        details (dict): Détails de l'opération. DOIT contenir 'inputs' et 'outputs'.
        status (str): "SUCCESS", "PARTIAL_SUCCESS" ou "FAILURE".

    Raises:
        ValueError: action inconnue, ou 'inputs' / 'outputs' absents de details.
    """

    # --- 1. Type d'action ---
    known = {member.value for member in ActionType}
    action_str = action.value if isinstance(action, ActionType) else action
    if action_str not in known:
        raise ValueError(f"❌ Action invalide : '{action}'. Utilisez la classe ActionType (ex: ActionType.UNFOLD).")

    # --- 2. Champs obligatoires ---
    missing_keys = [key for key in ("inputs", "outputs") if key not in details]
    if missing_keys:
        raise ValueError(
            f"❌ Erreur de Logging (Composant: {component}) : "
            f"Les champs {missing_keys} sont manquants dans le dictionnaire 'details'."
        )

    entry = {
        "id": str(uuid.uuid4()),
        "timestamp": datetime.now().isoformat(),
        "component": component,
        "action": action_str,
        "details": details,
        "status": status
    }

    # --- 3. Lecture-modification-écriture sous verrou ---
    with _LOCK:
        log_dir = os.path.dirname(LOG_FILE)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

        data = []
        if os.path.exists(LOG_FILE):
            try:
                with open(LOG_FILE, 'r', encoding='utf-8') as f:
                    content = f.read().strip()
                    if content:
                        data = json.loads(content)
            except json.JSONDecodeError:
                print(f"⚠️ Attention : Le fichier de logs {LOG_FILE} était corrompu. Une nouvelle liste a été créée.",
                      file=sys.stderr)
                data = []

        data.append(entry)

        with open(LOG_FILE, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=4, ensure_ascii=False, default=str)

"""
Configuration de fpforge.

Ordre de priorité : valeurs par défaut < variables d'environnement (.env
compris) < fichier JSON passé par --config < options explicites de la CLI.
"""
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from dotenv import load_dotenv

from src.imaging.sauvola import DEFAULT_BLOCK, DEFAULT_STD_THRESH, SauvolaParams
from src.orchestrator.sweep import (
    DEFAULT_FG_THRESHOLD,
    DEFAULT_QUALITY_THRESHOLD,
    SweepSpec,
)
from src.utils.errors import FileFormatError, ParameterError
from src.utils.logger import ActionType, log_experiment, set_log_file

TOOL_NAME = "fpforge"
__version__ = "0.1.0"
# Version du protocole de génération implémenté (ancre, dépliage, balayage des poses)
PROTOCOL_VERSION = "1.0"
# Version du schéma des fichiers produits (manifest, records, carte UV)
FORMAT_VERSION = "1.0"

ENV_WORKERS = "FPFORGE_WORKERS"
ENV_QUALITY_CMD = "FPFORGE_QUALITY_CMD"
ENV_LOG_FILE = "FPFORGE_LOG_FILE"

_SECTIONS = {"sauvola": SauvolaParams, "sweep": SweepSpec}


def version_string() -> str:
    return f"{TOOL_NAME} {__version__} (protocole {PROTOCOL_VERSION}, format de sortie {FORMAT_VERSION})"


@dataclass(frozen=True)
class Config:
    sauvola: SauvolaParams = field(default_factory=SauvolaParams)
    foreground_block: int = DEFAULT_BLOCK
    foreground_std: float = DEFAULT_STD_THRESH
    sweep: SweepSpec = field(default_factory=SweepSpec)
    canvas: int = 512
    ppi: int = 500
    slab: float = 0.25
    workers: int = 1
    fg_threshold: float = DEFAULT_FG_THRESHOLD
    quality_threshold: float = DEFAULT_QUALITY_THRESHOLD
    quality_cmd: Optional[str] = None
    ddim_steps: int = 50

    def __post_init__(self):
        for name in ("foreground_block", "canvas", "ppi", "workers", "ddim_steps"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ParameterError(f"{name} doit être un entier >= 1 (reçu {value!r})")
        if not self.slab > 0:
            raise ParameterError(f"slab doit être > 0 (reçu {self.slab})")
        if not 0 < self.fg_threshold < 1:
            raise ParameterError(f"fg_threshold doit être dans (0, 1) (reçu {self.fg_threshold})")
        if not 0 <= self.quality_threshold <= 1:
            raise ParameterError(f"quality_threshold doit être dans [0, 1] (reçu {self.quality_threshold})")

    def to_dict(self) -> dict:
        return asdict(self)


def overlay(config: Config, overrides: dict, source: str = "options") -> Config:
    """
    Applique un dictionnaire de valeurs sur une configuration.

    Les sections 'sauvola' et 'sweep' sont des sous-dictionnaires ; les
    valeurs None sont ignorées (option non fournie).
    """
    known = {f.name for f in fields(Config)}
    updates = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in known:
            raise ParameterError(f"Clé de configuration inconnue '{key}' ({source})")
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ParameterError(f"La section '{key}' doit être un objet ({source})")
            current = getattr(config, key)
            allowed = {f.name for f in fields(current)}
            unknown = sorted(set(value) - allowed)
            if unknown:
                raise ParameterError(f"Clés inconnues dans '{key}' : {unknown} ({source})")
            section = {k: v for k, v in value.items() if v is not None}
            try:
                updates[key] = replace(current, **section)
            except TypeError as error:
                raise ParameterError(f"Section '{key}' invalide ({source}) : {error}") from error
        else:
            updates[key] = value
    return replace(config, **updates)


def from_environment(config: Config) -> Config:
    overrides = {}
    workers = os.getenv(ENV_WORKERS)
    if workers:
        try:
            overrides["workers"] = int(workers)
        except ValueError as error:
            raise ParameterError(f"{ENV_WORKERS} doit être un entier (reçu '{workers}')") from error
    quality_cmd = os.getenv(ENV_QUALITY_CMD)
    if quality_cmd:
        overrides["quality_cmd"] = quality_cmd
    return overlay(config, overrides, "environnement")


def read_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as error:
            raise FileFormatError(f"Configuration JSON invalide ({path}) : {error}") from error
    if not isinstance(payload, dict):
        raise FileFormatError(f"La configuration {path} doit être un objet JSON")
    return payload


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> Config:
    """Construit la configuration effective selon l'ordre de priorité."""
    load_dotenv()
    # Le .env est lu après l'import du logger
    if os.getenv(ENV_LOG_FILE):
        set_log_file(os.getenv(ENV_LOG_FILE))
    config = from_environment(Config())
    if path:
        config = overlay(config, read_config_file(path), path)
        log_experiment(
            "config",
            ActionType.CONFIG,
            details={"inputs": {"path": path}, "outputs": config.to_dict()},
            status="SUCCESS"
        )
    if overrides:
        config = overlay(config, overrides)
    return config

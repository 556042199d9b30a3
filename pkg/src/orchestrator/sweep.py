"""
Protocole de balayage des poses et filtrage des identités.

Une identité = une texture standard + un nuage 3D de doigt. Elle est
retenue si son taux de premier plan dépasse strictement le seuil et, si un
scoreur de qualité est branché, si son score dépasse strictement 0.55.
"""
import hashlib
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from src.geometry.poseproject import MAX_ROLL_DEG, RollPose
from src.imaging.imagecore import GrayImage, foreground_ratio
from src.imaging.sauvola import DEFAULT_BLOCK, DEFAULT_STD_THRESH, estimate_foreground
from src.utils.errors import ParameterError, QualityHookError
from src.utils.tools import run_quality_command, write_pgm

DEFAULT_FG_THRESHOLD = 0.6
DEFAULT_QUALITY_THRESHOLD = 0.55

REASON_FOREGROUND = "foreground"
REASON_QUALITY = "quality"


@dataclass(frozen=True)
class SweepSpec:
    """Nombre de rendus par côté, angle maximal, pose frontale."""
    n_positive: int = 4
    n_negative: int = 4
    max_angle: float = MAX_ROLL_DEG
    include_frontal: bool = True

    def __post_init__(self):
        for name in ("n_positive", "n_negative"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ParameterError(f"{name} doit être un entier >= 0 (reçu {value!r})")
        if not 0 < self.max_angle <= MAX_ROLL_DEG:
            raise ParameterError(f"max_angle doit être dans (0, {MAX_ROLL_DEG}] (reçu {self.max_angle})")
        grid = self.grid_size
        if max(self.n_positive, self.n_negative) > grid:
            raise ParameterError(
                f"{max(self.n_positive, self.n_negative)} angles demandés par côté "
                f"pour une grille de {grid} valeurs")

    @property
    def grid_size(self) -> int:
        """Nombre d'angles entiers disponibles dans (0, max_angle]."""
        return int(math.floor(self.max_angle))

    @property
    def total(self) -> int:
        return self.n_positive + self.n_negative + int(self.include_frontal)

    def to_dict(self) -> dict:
        return asdict(self)


def plan_sweep(spec: SweepSpec, seed: int) -> List[RollPose]:
    """
    Tire les angles de roulement d'une identité.

    Les angles sont tirés sans remise sur la grille de 1° de (0, max_angle]
    de chaque côté. La pose frontale vient en tête, les autres suivent
    dans l'ordre croissant.
    """
    if seed < 0:
        raise ParameterError(f"La graine doit être >= 0 (reçu {seed})")
    rng = np.random.default_rng(seed)
    grid = np.arange(1, spec.grid_size + 1)
    positive = rng.choice(grid, size=spec.n_positive, replace=False)
    negative = -rng.choice(grid, size=spec.n_negative, replace=False)
    angles = sorted(float(a) for a in np.concatenate([positive, negative]))
    frontal = [RollPose(0.0)] if spec.include_frontal else []
    return frontal + [RollPose(a) for a in angles]


def derive_seed(seed: int, identity_id: str) -> int:
    """Graine propre à une identité, indépendante de l'ordre de traitement."""
    digest = hashlib.sha256(identity_id.encode("utf-8")).digest()
    entropy = [seed, int.from_bytes(digest[:8], "little")]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Filtrage
# ---------------------------------------------------------------------------

QualityHook = Callable[[GrayImage], float]


class CommandQualityHook:
    """Scoreur externe : exécutable appelé avec le chemin d'un PGM, score sur stdout."""

    def __init__(self, command: str, timeout: float = 120.0):
        self.command = command
        self.timeout = timeout

    @property
    def name(self) -> str:
        return os.path.basename(self.command) or self.command

    def __call__(self, tex: GrayImage) -> float:
        with tempfile.TemporaryDirectory(prefix="fpforge-quality-") as tmp:
            path = os.path.join(tmp, "texture.pgm")
            write_pgm(path, tex)
            try:
                output = run_quality_command(self.command, path, self.timeout)
            except Exception as error:
                raise QualityHookError(self.name, str(error)) from error
        tokens = output.split()
        try:
            return float(tokens[0])
        except (IndexError, ValueError) as error:
            raise QualityHookError(self.name, f"sortie non numérique : {output.strip()!r}") from error


def hook_name(hook: Optional[QualityHook]) -> Optional[str]:
    if hook is None:
        return None
    return getattr(hook, "name", None) or getattr(hook, "__name__", None) or type(hook).__name__


@dataclass(frozen=True)
class FilterResult:
    passed: bool
    foreground_ratio: float
    quality_score: Optional[float] = None
    reasons: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def filter_identity(tex: GrayImage, fg_threshold: float = DEFAULT_FG_THRESHOLD,
                    quality_hook: Optional[QualityHook] = None,
                    quality_threshold: float = DEFAULT_QUALITY_THRESHOLD,
                    block: int = DEFAULT_BLOCK, std_thresh: float = DEFAULT_STD_THRESH) -> FilterResult:
    """
    Décide si une texture source mérite d'être rendue.

    Les deux seuils sont stricts : un taux de premier plan égal au seuil, ou
    un score égal à 0.55, fait échouer l'identité. Toutes les raisons
    d'échec sont listées.
    """
    if not 0 < fg_threshold < 1:
        raise ParameterError(f"fg_threshold doit être dans (0, 1) (reçu {fg_threshold})")
    ratio = foreground_ratio(estimate_foreground(tex, block, std_thresh))
    reasons = []
    if not ratio > fg_threshold:
        reasons.append(REASON_FOREGROUND)

    score = None
    if quality_hook is not None:
        try:
            score = float(quality_hook(tex))
        except QualityHookError:
            raise
        except Exception as error:
            raise QualityHookError(hook_name(quality_hook), str(error)) from error
        if not score > quality_threshold:
            reasons.append(REASON_QUALITY)
    return FilterResult(not reasons, ratio, score, reasons)


# ---------------------------------------------------------------------------
# Enregistrements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IdentityInput:
    identity_id: str
    texture_path: str
    cloud_path: str

    def __post_init__(self):
        bad = not self.identity_id or self.identity_id in (".", "..")
        if bad or any(sep in self.identity_id for sep in ("/", "\\", os.sep)):
            raise ParameterError(f"Identifiant d'identité invalide : {self.identity_id!r}")


@dataclass(frozen=True)
class RenderEntry:
    theta: float
    image_path: str
    delta_u: float
    foreground_ratio: float


@dataclass(frozen=True)
class IdentityRecord:
    identity_id: str
    texture_path: str
    cloud_path: str
    renders: List[RenderEntry] = field(default_factory=list)
    passed_filter: bool = False
    filter: Optional[FilterResult] = None
    error: Optional[str] = None

    @property
    def status(self) -> str:
        if self.error is not None:
            return "error"
        return "rendered" if self.passed_filter else "filtered"

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["renders"] = sorted(payload["renders"], key=lambda r: r["theta"])
        payload["status"] = self.status
        return payload


def theta_filename(theta: float) -> str:
    """Nom de fichier d'une pose : '-37.pgm', '0.pgm', '12.5.pgm'."""
    return f"{theta + 0.0:g}.pgm"

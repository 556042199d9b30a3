"""
Mathématiques de diffusion (bruitage direct, pas DDIM déterministe) et
quantification vectorielle sur des grilles latentes.

Aucun réseau n'est entraîné ici : le prédicteur de bruit est une interface,
implémentée par un oracle analytique ou un prédicteur constant.
"""
from dataclasses import dataclass
from typing import Any, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from src.utils.errors import DimensionError, ParameterError, SingularityError

DEFAULT_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DEFAULT_CODEBOOK_SIZE = 4096
LATENT_CHANNELS = 3
_VQ_CHUNK = 2048


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Coefficients β_t, α_t et ᾱ_t pour t = 1..T.

    Les tableaux sont indexés par t : l'indice 0 porte la convention ᾱ_0 = 1
    (β_0 = 0), ce qui rend exact le dernier pas DDIM.
    """
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas) - 1

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t <= self.T:
            raise ParameterError(f"Pas t={t} hors de [0, {self.T}]")
        return float(self.alpha_bars[t])


@dataclass(frozen=True)
class LatentGrid:
    """Tenseur latent canaux x hauteur x largeur."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise DimensionError(f"Grille (C, H, W) attendue, reçu la forme {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ParameterError("Valeurs latentes non finies")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class Codebook:
    """N_C vecteurs de dimension D, sans doublon."""
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2 or len(entries) == 0:
            raise DimensionError(f"Table (N, D) attendue, reçu la forme {entries.shape}")
        if len(np.unique(entries, axis=0)) != len(entries):
            raise ParameterError("Le codebook contient des entrées dupliquées")
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]


class NoisePredictor(Protocol):
    """ε_θ(z_t, t, C) : renvoie un bruit prédit de même forme que z_t."""

    def __call__(self, zt: LatentGrid, t: int, cond: Any) -> np.ndarray:
        ...


class ExactNoisePredictor:
    """Oracle : renvoie le bruit exact qui relie z_t à un z0 connu."""

    def __init__(self, z0: LatentGrid, sched: NoiseSchedule):
        self.z0 = z0
        self.sched = sched

    def __call__(self, zt: LatentGrid, t: int, cond: Any = None) -> np.ndarray:
        a_bar = self.sched.alpha_bar(t)
        return (zt.values - np.sqrt(a_bar) * self.z0.values) / np.sqrt(1.0 - a_bar)


class ConstantNoisePredictor:
    def __init__(self, value: float = 0.0):
        self.value = value

    def __call__(self, zt: LatentGrid, t: int, cond: Any = None) -> np.ndarray:
        return np.full(zt.shape, self.value)


def _as_array(grid: Union[LatentGrid, np.ndarray]) -> np.ndarray:
    return grid.values if isinstance(grid, LatentGrid) else np.asarray(grid, dtype=np.float64)


def _check_step(sched: NoiseSchedule, t: int):
    if not 1 <= t <= sched.T:
        raise ParameterError(f"Pas t={t} hors de [1, {sched.T}]")


def linear_schedule(T: int = DEFAULT_STEPS, beta_start: float = DEFAULT_BETA_START,
                    beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """β linéairement espacés de beta_start à beta_end, ᾱ produits cumulés."""
    if T < 1:
        raise ParameterError(f"T doit être >= 1 (reçu {T})")
    if not 0 < beta_start <= beta_end < 1:
        raise ParameterError(f"0 < beta_start <= beta_end < 1 requis (reçu {beta_start}, {beta_end})")
    betas = np.concatenate([[0.0], np.linspace(beta_start, beta_end, T)])
    alphas = 1.0 - betas
    return NoiseSchedule(betas, alphas, np.cumprod(alphas))


def forward_noise(z0: LatentGrid, t: int, eps, sched: NoiseSchedule) -> LatentGrid:
    """z_t = sqrt(ᾱ_t) z0 + sqrt(1 - ᾱ_t) ε."""
    _check_step(sched, t)
    noise = _as_array(eps)
    if noise.shape != z0.shape:
        raise DimensionError(f"Bruit {noise.shape} incompatible avec z0 {z0.shape}")
    a_bar = sched.alpha_bar(t)
    return LatentGrid(np.sqrt(a_bar) * z0.values + np.sqrt(1.0 - a_bar) * noise)


def predict_z0(zt: LatentGrid, t: int, eps_pred, sched: NoiseSchedule) -> LatentGrid:
    """ẑ0 = (z_t - sqrt(1 - ᾱ_t) ε̂) / sqrt(ᾱ_t)."""
    _check_step(sched, t)
    noise = _as_array(eps_pred)
    if noise.shape != zt.shape:
        raise DimensionError(f"Bruit prédit {noise.shape} incompatible avec z_t {zt.shape}")
    a_bar = sched.alpha_bar(t)
    if a_bar <= 0:
        raise SingularityError(f"ᾱ_{t} = 0")
    return LatentGrid((zt.values - np.sqrt(1.0 - a_bar) * noise) / np.sqrt(a_bar))


def _predict(predictor: NoisePredictor, zt: LatentGrid, t: int, cond: Any) -> np.ndarray:
    eps = np.asarray(predictor(zt, t, cond), dtype=np.float64)
    if eps.shape != zt.shape:
        raise DimensionError(f"Le prédicteur renvoie {eps.shape} au lieu de {zt.shape}")
    return eps


def ddim_step(zt: LatentGrid, t: int, predictor: NoisePredictor, cond: Any,
              sched: NoiseSchedule, t_prev: Optional[int] = None) -> LatentGrid:
    """
    Pas DDIM déterministe (σ_t = 0) de t vers t_prev (t - 1 par défaut).

    z_prev = sqrt(ᾱ_prev) ẑ0 + sqrt(1 - ᾱ_prev) ε̂
    """
    t_prev = t - 1 if t_prev is None else t_prev
    if not 0 <= t_prev < t:
        raise ParameterError(f"t_prev={t_prev} doit être dans [0, {t})")
    eps = _predict(predictor, zt, t, cond)
    z0_hat = predict_z0(zt, t, eps, sched)
    a_prev = sched.alpha_bar(t_prev)
    return LatentGrid(np.sqrt(a_prev) * z0_hat.values + np.sqrt(1.0 - a_prev) * eps)


def ddim_timesteps(T: int, num_steps: int) -> list:
    """Sous-suite décroissante de num_steps pas entre T et 1, terminée par 0."""
    if not 1 <= num_steps <= T:
        raise ParameterError(f"num_steps doit être dans [1, {T}] (reçu {num_steps})")
    steps = np.unique(np.round(np.linspace(T, 1, num_steps)).astype(int))[::-1]
    return [int(t) for t in steps] + [0]


def ddim_sample(zT: LatentGrid, predictor: NoisePredictor, cond: Any, sched: NoiseSchedule,
                num_steps: Optional[int] = None, codebook: Optional[Codebook] = None) -> LatentGrid:
    """
    Trajectoire inverse complète de z_T à z_0.

    Avec codebook, le latent final est raffiné par quantification vectorielle.
    """
    timesteps = ddim_timesteps(sched.T, num_steps or sched.T)
    z = zT
    for t, t_prev in zip(timesteps[:-1], timesteps[1:]):
        z = ddim_step(z, t, predictor, cond, sched, t_prev=t_prev)
    if codebook is not None:
        _, z = vq_quantize(z, codebook)
    return z


def noise_prediction_loss(z0: LatentGrid, t: int, eps, predictor: NoisePredictor,
                          cond: Any, sched: NoiseSchedule) -> float:
    """Erreur quadratique moyenne ||ε - ε_θ(z_t, t, C)||² pour un tirage donné."""
    zt = forward_noise(z0, t, eps, sched)
    residual = _as_array(eps) - _predict(predictor, zt, t, cond)
    return float(np.mean(residual ** 2))


def random_codebook(n: int = DEFAULT_CODEBOOK_SIZE, dim: int = LATENT_CHANNELS,
                    seed: int = 0) -> Codebook:
    """Codebook gaussien reproductible (PCG64)."""
    if n < 1 or dim < 1:
        raise ParameterError(f"Taille de codebook invalide ({n}, {dim})")
    rng = np.random.default_rng(seed)
    return Codebook(rng.standard_normal((n, dim)))


def vq_quantize(z: LatentGrid, cb: Codebook) -> Tuple[np.ndarray, LatentGrid]:
    """
    Quantifie chaque position spatiale vers l'entrée la plus proche (euclidienne).

    À distance égale, le plus petit indice l'emporte.
    """
    if z.channels != cb.dim:
        raise DimensionError(f"{z.channels} canaux pour un codebook de dimension {cb.dim}")
    vectors = z.values.reshape(z.channels, -1).T
    indices = np.empty(len(vectors), dtype=np.int64)
    for start in range(0, len(vectors), _VQ_CHUNK):
        chunk = vectors[start:start + _VQ_CHUNK]
        indices[start:start + len(chunk)] = np.argmin(cdist(chunk, cb.entries, "sqeuclidean"), axis=1)
    indices = indices.reshape(z.height, z.width)
    return indices, vq_lookup(indices, cb)


def vq_lookup(indices: np.ndarray, cb: Codebook) -> LatentGrid:
    """Reconstruit la grille latente à partir d'une grille d'indices."""
    indices = np.asarray(indices)
    if indices.ndim != 2:
        raise DimensionError(f"Grille d'indices 2D attendue, reçu {indices.shape}")
    return LatentGrid(np.moveaxis(cb.entries[indices], -1, 0))


def parse_grid(text: str) -> Tuple[int, int, int]:
    """'3x16x16' -> (3, 16, 16)."""
    try:
        dims = tuple(int(part) for part in text.lower().split("x"))
    except ValueError as error:
        raise ParameterError(f"Grille invalide '{text}'") from error
    if len(dims) != 3 or min(dims) < 1:
        raise ParameterError(f"Grille CxHxW attendue, reçu '{text}'")
    return dims


def exact_reconstruction_demo(steps: int, grid: Sequence[int], seed: int) -> dict:
    """Trajectoire DDIM complète avec l'oracle exact ; renvoie l'erreur maximale."""
    sched = linear_schedule(steps)
    rng = np.random.default_rng(seed)
    z0 = LatentGrid(rng.standard_normal(tuple(grid)))
    eps = rng.standard_normal(tuple(grid))
    zT = forward_noise(z0, sched.T, eps, sched)
    z_out = ddim_sample(zT, ExactNoisePredictor(z0, sched), None, sched)
    return {
        "steps": steps,
        "grid": "x".join(str(d) for d in grid),
        "generator": "numpy.random.PCG64",
        "seed": seed,
        "max_abs_error": float(np.max(np.abs(z_out.values - z0.values))),
    }

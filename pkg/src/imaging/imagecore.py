"""
Types raster et primitives d'image partagées.

GrayImage / BinaryMap / ForegroundMask portent les données sous forme de
tableaux numpy (hauteur, largeur) en ordre ligne-major. Les statistiques
locales passent par des tables de sommes cumulées (IntegralPair), la
morphologie et les composantes connexes par scipy.ndimage.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from src.utils.errors import DimensionError, ParameterError

DEFAULT_PPI = 500


@dataclass(frozen=True)
class GrayImage:
    """Image en niveaux de gris, intensités réelles dans [0, 255]."""
    data: np.ndarray
    ppi: int = DEFAULT_PPI

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or data.size == 0:
            raise DimensionError(f"Image 2D non vide attendue, reçu la forme {data.shape}")
        if not np.all(np.isfinite(data)) or data.min() < 0 or data.max() > 255:
            raise ParameterError("Intensités attendues dans [0, 255]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, value: float, ppi: int = DEFAULT_PPI) -> "GrayImage":
        return cls(np.full((height, width), float(value)), ppi)


@dataclass(frozen=True)
class BinaryMap:
    """Carte crête/fond : 0 = crête (premier plan), 255 = fond."""
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.size == 0:
            raise DimensionError(f"Carte 2D non vide attendue, reçu la forme {data.shape}")
        if not np.all((data == 0) | (data == 255)):
            raise ParameterError("Une BinaryMap ne contient que 0 ou 255")
        data = data.astype(np.uint8)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def foreground(self) -> np.ndarray:
        return self.data == 0

    @classmethod
    def from_foreground(cls, foreground: np.ndarray) -> "BinaryMap":
        return cls(np.where(foreground, 0, 255).astype(np.uint8))


@dataclass(frozen=True)
class ForegroundMask:
    """Masque booléen de la région exploitable (𝓜)."""
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=bool)
        if data.ndim != 2:
            raise DimensionError(f"Masque 2D attendu, reçu la forme {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return int(self.data.sum())

    @classmethod
    def full(cls, width: int, height: int, value: bool = True) -> "ForegroundMask":
        return cls(np.full((height, width), value, dtype=bool))


@dataclass(frozen=True)
class IntegralPair:
    """Tables de sommes cumulées (H+1) x (W+1) des intensités et de leurs carrés."""
    sum: np.ndarray
    sumsq: np.ndarray

    @property
    def width(self) -> int:
        return self.sum.shape[1] - 1

    @property
    def height(self) -> int:
        return self.sum.shape[0] - 1

    def rect_sum(self, x0, y0, x1, y1):
        """Somme et somme des carrés sur [y0, y1) x [x0, x1) ; accepte des tableaux."""
        s = self.sum[y1, x1] - self.sum[y0, x1] - self.sum[y1, x0] + self.sum[y0, x0]
        q = self.sumsq[y1, x1] - self.sumsq[y0, x1] - self.sumsq[y1, x0] + self.sumsq[y0, x0]
        return s, q


def build_integral(img: GrayImage) -> IntegralPair:
    """Construit les tables de sommes cumulées d'une image."""
    if img.data.size == 0:
        raise DimensionError("Image vide")
    data = img.data
    total = np.pad(data, ((1, 0), (1, 0)), mode="constant").cumsum(0).cumsum(1)
    total_sq = np.pad(data * data, ((1, 0), (1, 0)), mode="constant").cumsum(0).cumsum(1)
    return IntegralPair(total, total_sq)


def _check_window(w: int):
    if w < 3 or w % 2 == 0:
        raise ParameterError(f"Fenêtre impaire >= 3 attendue, reçu {w}")


def _moments(s, q, count):
    mean = s / count
    var = np.maximum(0.0, q / count - mean * mean)
    return mean, np.sqrt(var)


def window_stats(ip: IntegralPair, x: int, y: int, w: int) -> Tuple[float, float]:
    """
    Moyenne et écart-type locaux sur une fenêtre w x w centrée en (x, y).

    La fenêtre est tronquée aux bords de l'image ; le diviseur est le nombre
    réel de pixels couverts.
    """
    _check_window(w)
    if not (0 <= x < ip.width and 0 <= y < ip.height):
        raise ParameterError(f"Coordonnées ({x}, {y}) hors image")
    r = w // 2
    x0, x1 = max(0, x - r), min(ip.width, x + r + 1)
    y0, y1 = max(0, y - r), min(ip.height, y + r + 1)
    s, q = ip.rect_sum(x0, y0, x1, y1)
    mean, std = _moments(s, q, (x1 - x0) * (y1 - y0))
    return float(mean), float(std)


def window_stats_map(ip: IntegralPair, w: int) -> Tuple[np.ndarray, np.ndarray]:
    """Version vectorisée de window_stats pour tous les pixels."""
    _check_window(w)
    r = w // 2
    ys = np.arange(ip.height)
    xs = np.arange(ip.width)
    y0 = np.clip(ys - r, 0, ip.height)[:, None]
    y1 = np.clip(ys + r + 1, 0, ip.height)[:, None]
    x0 = np.clip(xs - r, 0, ip.width)[None, :]
    x1 = np.clip(xs + r + 1, 0, ip.width)[None, :]
    s, q = ip.rect_sum(x0, y0, x1, y1)
    return _moments(s, q, (y1 - y0) * (x1 - x0))


def morph_open(bm: BinaryMap, se_width: int, se_height: int) -> BinaryMap:
    """
    Ouverture morphologique (érosion puis dilatation) du premier plan (valeur 0).

    L'élément structurant est un rectangle plein ; le résultat ne dépend pas
    de son point d'ancrage. L'extérieur de l'image compte comme fond.
    """
    if se_width < 1 or se_height < 1:
        raise ParameterError("Élément structurant de taille >= 1 attendu")
    structure = np.ones((se_height, se_width), dtype=bool)
    opened = ndimage.binary_opening(bm.foreground, structure=structure, border_value=0)
    return BinaryMap.from_foreground(opened)


def largest_component(mask: ForegroundMask) -> ForegroundMask:
    """Garde la plus grande composante 4-connexe (à égalité, la première étiquette)."""
    labels, count = ndimage.label(mask.data)
    if count == 0:
        return ForegroundMask(np.zeros_like(mask.data))
    sizes = np.bincount(labels.ravel())[1:]
    return ForegroundMask(labels == int(np.argmax(sizes)) + 1)


def fill_holes(mask: ForegroundMask) -> ForegroundMask:
    return ForegroundMask(ndimage.binary_fill_holes(mask.data))


def foreground_ratio(mask: ForegroundMask) -> float:
    """Fraction de pixels de premier plan."""
    total = mask.width * mask.height
    if total == 0:
        return 0.0
    return mask.count / total


def check_same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise DimensionError(f"Dimensions incompatibles : {sorted(shapes)}")

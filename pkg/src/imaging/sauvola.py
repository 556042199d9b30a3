"""
Binarisation adaptative locale de Sauvola : carte d'ancrage d'identité.

T(x, y) = m(x, y) * [1 + k * (s(x, y) / R - 1)]
B(x, y) = 0 si (x, y) ∈ 𝓜 et I(x, y) > T(x, y), 255 sinon,
suivi d'une ouverture morphologique 2 x 2.
"""
import math
from dataclasses import dataclass

import numpy as np

from src.imaging.imagecore import (
    BinaryMap,
    ForegroundMask,
    GrayImage,
    IntegralPair,
    build_integral,
    check_same_shape,
    fill_holes,
    largest_component,
    morph_open,
    window_stats,
    window_stats_map,
)
from src.utils.errors import ParameterError

OPENING_SIZE = 2
DEFAULT_BLOCK = 16
DEFAULT_STD_THRESH = 8.0


@dataclass(frozen=True)
class SauvolaParams:
    """Paramètres du seuillage : fenêtre w, correction k, dynamique R."""
    w: int = 11
    k: float = 0.007
    R: float = 128.0

    def __post_init__(self):
        if int(self.w) != self.w or self.w < 3 or self.w % 2 == 0:
            raise ParameterError(f"w doit être impair et >= 3 (reçu {self.w})")
        if not math.isfinite(self.k):
            raise ParameterError(f"k doit être fini (reçu {self.k})")
        if not (math.isfinite(self.R) and self.R > 0):
            raise ParameterError(f"R doit être > 0 (reçu {self.R})")


def sauvola_formula(mean, std, p: SauvolaParams):
    """Loi de seuil appliquée à des statistiques déjà calculées (scalaires ou tableaux)."""
    return mean * (1.0 + p.k * (std / p.R - 1.0))


def sauvola_threshold(ip: IntegralPair, x: int, y: int, p: SauvolaParams) -> float:
    """Seuil local au pixel (x, y)."""
    mean, std = window_stats(ip, x, y, p.w)
    return float(sauvola_formula(mean, std, p))


def threshold_map(img: GrayImage, p: SauvolaParams) -> np.ndarray:
    """Seuils de tous les pixels en une passe sur les tables cumulées."""
    mean, std = window_stats_map(build_integral(img), p.w)
    return sauvola_formula(mean, std, p)


def binarize(img: GrayImage, mask: ForegroundMask, p: SauvolaParams = SauvolaParams()) -> BinaryMap:
    """
    Applique la règle de binarisation puis l'ouverture 2 x 2.

    Les pixels clairs au-dessus du seuil deviennent des crêtes (0) : en
    imagerie sans contact ce sont les crêtes qui réfléchissent la lumière.
    """
    check_same_shape(img.data, mask.data)
    ridges = mask.data & (img.data > threshold_map(img, p))
    return morph_open(BinaryMap.from_foreground(ridges), OPENING_SIZE, OPENING_SIZE)


def estimate_foreground(img: GrayImage, block: int = DEFAULT_BLOCK,
                        std_thresh: float = DEFAULT_STD_THRESH) -> ForegroundMask:
    """
    Estime le masque 𝓜 : blocs texturés, plus grande composante, trous bouchés.

    Un bloc est retenu si l'écart-type de ses intensités dépasse std_thresh.
    Les blocs du bord droit / bas peuvent être tronqués.
    """
    if block < 4:
        raise ParameterError(f"block doit être >= 4 (reçu {block})")
    ip = build_integral(img)
    y_edges = np.minimum(np.arange(0, img.height + block, block), img.height)
    x_edges = np.minimum(np.arange(0, img.width + block, block), img.width)
    y_edges = np.unique(y_edges)
    x_edges = np.unique(x_edges)
    y0, y1 = y_edges[:-1, None], y_edges[1:, None]
    x0, x1 = x_edges[None, :-1], x_edges[None, 1:]
    s, q = ip.rect_sum(x0, y0, x1, y1)
    count = (y1 - y0) * (x1 - x0)
    mean = s / count
    std = np.sqrt(np.maximum(0.0, q / count - mean * mean))
    textured = std > std_thresh

    rows = np.repeat(textured, np.diff(y_edges), axis=0)
    pixels = np.repeat(rows, np.diff(x_edges), axis=1)
    return fill_holes(largest_component(ForegroundMask(pixels)))

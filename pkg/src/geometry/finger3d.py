"""
Modèle 3D du doigt : ingestion, redressement, découpage en sections et
dépliage géodésique vers le plan UV.

Conventions :
- coordonnées en millimètres, axe longitudinal y (pointe vers +y),
  face pulpaire vers +z (côté caméra) ;
- u = distance géodésique signée au plan x = 0 le long de la section,
  v = y, tous deux convertis en pixels (ppi / 25.4 px par mm).
"""
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from src.imaging.imagecore import DEFAULT_PPI, GrayImage
from src.utils.errors import DegenerateCloudError, EmptySectionsError, ParameterError

MM_PER_INCH = 25.4
DEFAULT_SLAB = 0.25
MIN_SECTION_POINTS = 8
MIN_UNFOLD_POINTS = 1000
BACKGROUND = 255.0

_RANK_TOL = 1e-10
_SKEW_TOL = 1e-3


def px_per_mm(ppi: float = DEFAULT_PPI) -> float:
    return ppi / MM_PER_INCH


@dataclass(frozen=True)
class FingerPointCloud:
    """Échantillons 3D de la surface du doigt (mm), normales et intensités optionnelles."""
    points: np.ndarray
    normals: Optional[np.ndarray] = None
    intensities: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ParameterError(f"Points (N, 3) attendus, reçu la forme {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ParameterError("Coordonnées non finies dans le nuage")
        object.__setattr__(self, "points", points)
        if self.normals is not None:
            normals = np.array(self.normals, dtype=np.float64)
            if normals.shape != points.shape:
                raise ParameterError("Les normales doivent avoir la forme des points")
            object.__setattr__(self, "normals", normals)
        if self.intensities is not None:
            values = np.array(self.intensities, dtype=np.float64)
            if values.shape != (len(points),):
                raise ParameterError("Une intensité par point attendue")
            object.__setattr__(self, "intensities", values)

    def __len__(self) -> int:
        return len(self.points)

    def with_intensities(self, values: np.ndarray) -> "FingerPointCloud":
        return replace(self, intensities=values)

    def transformed(self, rotation: np.ndarray, origin: Optional[np.ndarray] = None) -> "FingerPointCloud":
        """Applique p -> R (p - origin) aux points et R n aux normales."""
        centered = self.points if origin is None else self.points - origin
        normals = None if self.normals is None else self.normals @ rotation.T
        return replace(self, points=centered @ rotation.T, normals=normals)


@dataclass(frozen=True)
class CrossSection:
    """
    Section transverse ordonnée le long de l'arc.

    cumulative_geodesic vaut None si l'arc ne traverse jamais x = 0.
    """
    y_center: float
    arc_points: np.ndarray            # (M, 2) : x, z
    point_indices: np.ndarray         # (M,) indices dans le nuage
    y_values: np.ndarray              # (M,) y de chaque point
    arc_length: np.ndarray            # (M,) longueur de polyligne depuis le début de l'arc
    cumulative_geodesic: Optional[np.ndarray] = None

    @property
    def crosses_reference_plane(self) -> bool:
        return self.cumulative_geodesic is not None

    def outward_normals(self) -> np.ndarray:
        """Normales 2D (x, z) unitaires orientées vers l'extérieur de la section."""
        return arc_normals(self.arc_points)


@dataclass(frozen=True)
class UnfoldedSurface:
    """Paramétrisation UV (pixels) reliant chaque point 3D au repère standard."""
    sections: Tuple[CrossSection, ...]
    uv: np.ndarray                    # (N, 2), NaN pour les points non assignés
    ppi: float
    bounds: Tuple[float, float, float, float]   # umin, vmin, umax, vmax
    skipped_sections: int = 0
    cloud: Optional[FingerPointCloud] = field(default=None, compare=False)

    @property
    def scale(self) -> float:
        return px_per_mm(self.ppi)

    @property
    def assigned(self) -> np.ndarray:
        return ~np.isnan(self.uv[:, 0])

    def uv_of_point(self, index: int) -> Tuple[float, float]:
        u, v = self.uv[index]
        return float(u), float(v)

    def reference_section(self) -> CrossSection:
        """Section dépliée la plus proche de v = 0."""
        candidates = [s for s in self.sections if s.crosses_reference_plane]
        if not candidates:
            raise EmptySectionsError("Aucune section ne traverse le plan x = 0")
        return min(candidates, key=lambda s: abs(s.y_center))


# ---------------------------------------------------------------------------
# Redressement
# ---------------------------------------------------------------------------

def _orient(axis: np.ndarray, centered: np.ndarray, positive_skew: bool) -> np.ndarray:
    proj = centered @ axis
    spread = np.sqrt(np.mean(proj ** 2))
    skew = np.mean(proj ** 3) / spread ** 3 if spread > 0 else 0.0
    if abs(skew) < _SKEW_TOL:
        # Asymétrie indécidable : composante dominante positive.
        return axis if axis[np.argmax(np.abs(axis))] > 0 else -axis
    if (skew > 0) != positive_skew:
        return -axis
    return axis


def principal_frame(pc: FingerPointCloud) -> Tuple[np.ndarray, np.ndarray]:
    """
    Centroïde et repère redressé (lignes ex, ey, ez) par analyse en composantes principales.

    ey suit l'axe de plus grande variance, orienté vers la queue de la
    distribution de densité (la pointe, moins échantillonnée) ; ez suit l'axe
    de plus faible variance, orienté vers la face convexe ; ex = ey x ez.
    """
    if len(pc) < 4:
        raise DegenerateCloudError("Au moins 4 points sont nécessaires")
    centroid = pc.points.mean(axis=0)
    centered = pc.points - centroid
    cov = centered.T @ centered / len(centered)
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= _RANK_TOL * max(evals[2], np.finfo(float).tiny):
        raise DegenerateCloudError(f"Covariance de rang < 3 (valeurs propres {evals})")
    ey = _orient(evecs[:, 2], centered, positive_skew=True)
    ez = _orient(evecs[:, 0], centered, positive_skew=False)
    ex = np.cross(ey, ez)
    return centroid, np.vstack([ex, ey, ez])


def rectify_pose(pc: FingerPointCloud) -> FingerPointCloud:
    """Centre le nuage sur son centroïde et l'aligne sur le repère principal."""
    centroid, frame = principal_frame(pc)
    return pc.transformed(frame, origin=centroid)


def mean_point_spacing(points: np.ndarray) -> float:
    """Distance moyenne au plus proche voisin."""
    distances, _ = cKDTree(points).query(points, k=2)
    return float(distances[:, 1].mean())


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------

def arc_normals(arc: np.ndarray) -> np.ndarray:
    # Points confondus consécutifs : la tangente est estimée sur les points distincts.
    distinct = np.concatenate([[True], np.any(np.diff(arc, axis=0) != 0, axis=1)])
    unique = arc[distinct]
    if len(unique) < 2:
        return np.zeros_like(arc)
    tangent = np.gradient(unique, axis=0)[np.cumsum(distinct) - 1]
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    outward = arc - arc.mean(axis=0)
    flip = np.einsum("ij,ij->i", normal, outward) < 0
    normal[flip] *= -1
    length = np.linalg.norm(normal, axis=1)
    length[length == 0] = 1.0
    return normal / length[:, None]


def zero_crossing(xs: np.ndarray, zs: np.ndarray, s: np.ndarray) -> Optional[float]:
    """
    Abscisse curviligne du passage de l'arc par x = 0.

    Interpolation linéaire entre les deux points qui encadrent le plan ; si
    l'arc le traverse plusieurs fois, le passage le plus haut en z l'emporte.
    """
    exact = np.flatnonzero(xs == 0.0)
    straddle = np.flatnonzero(xs[:-1] * xs[1:] < 0)
    t = xs[straddle] / (xs[straddle] - xs[straddle + 1])
    cand_z = np.concatenate([zs[exact], zs[straddle] + t * (zs[straddle + 1] - zs[straddle])])
    cand_s = np.concatenate([s[exact], s[straddle] + t * (s[straddle + 1] - s[straddle])])
    if cand_s.size == 0:
        return None
    return float(cand_s[int(np.argmax(cand_z))])


def _build_section(points: np.ndarray, idx: np.ndarray, y_center: float) -> CrossSection:
    x = points[idx, 0]
    z = points[idx, 2]
    dx = x - x.mean()
    dz = z - z.mean()
    extent = max(np.ptp(x), np.ptp(z), 1.0)
    dz[np.abs(dz) <= 1e-12 * extent] = 0.0
    order = np.lexsort((x, np.arctan2(dx, dz)))
    if x[order[0]] > x[order[-1]]:
        order = order[::-1]

    arc = np.column_stack([x[order], z[order]])
    steps = np.hypot(np.diff(arc[:, 0]), np.diff(arc[:, 1]))
    s = np.concatenate([[0.0], np.cumsum(steps)])
    s0 = zero_crossing(arc[:, 0], arc[:, 1], s)
    return CrossSection(
        y_center=float(y_center),
        arc_points=arc,
        point_indices=idx[order],
        y_values=points[idx[order], 1],
        arc_length=s,
        cumulative_geodesic=None if s0 is None else s - s0,
    )


def slice_sections(pc: FingerPointCloud, slab: float = DEFAULT_SLAB) -> list:
    """
    Découpe le nuage en tranches d'épaisseur slab le long de y.

    Les points de chaque tranche sont ordonnés par atan2(x, z) autour du
    centroïde de la tranche ; les tranches de moins de 8 points sont ignorées.
    """
    if not slab > 0:
        raise ParameterError(f"slab doit être > 0 (reçu {slab})")
    points = pc.points
    y = points[:, 1]
    y_min = y.min()
    bins = np.floor((y - y_min) / slab).astype(np.int64)
    order = np.argsort(bins, kind="stable")
    labels, starts = np.unique(bins[order], return_index=True)
    groups = np.split(order, starts[1:])

    sections = []
    for label, idx in zip(labels, groups):
        if idx.size < MIN_SECTION_POINTS:
            continue
        sections.append(_build_section(points, idx, y_min + (label + 0.5) * slab))
    if not sections:
        raise EmptySectionsError(f"Aucune tranche de {slab} mm ne contient {MIN_SECTION_POINTS} points")
    return sections


# ---------------------------------------------------------------------------
# Dépliage
# ---------------------------------------------------------------------------

def unfold_to_uv(sections: Sequence[CrossSection], ppi: float = DEFAULT_PPI,
                 cloud: Optional[FingerPointCloud] = None) -> UnfoldedSurface:
    """
    Projette chaque section sur le plan UV.

    u = distance géodésique signée au plan x = 0 (négative côté x < 0),
    v = y ; les deux en pixels. Une section qui ne traverse pas x = 0 est
    ignorée et comptée dans skipped_sections.
    """
    if not sections:
        raise EmptySectionsError("Liste de sections vide")
    scale = px_per_mm(ppi)
    n_points = len(cloud) if cloud is not None else 1 + max(int(s.point_indices.max()) for s in sections)
    uv = np.full((n_points, 2), np.nan)
    skipped = 0
    for section in sections:
        if not section.crosses_reference_plane:
            skipped += 1
            continue
        uv[section.point_indices, 0] = section.cumulative_geodesic * scale
        uv[section.point_indices, 1] = section.y_values * scale

    assigned = ~np.isnan(uv[:, 0])
    if assigned.any():
        umin, vmin = uv[assigned].min(axis=0)
        umax, vmax = uv[assigned].max(axis=0)
        bounds = (float(umin), float(vmin), float(umax), float(vmax))
    else:
        bounds = (0.0, 0.0, 0.0, 0.0)
    return UnfoldedSurface(tuple(sections), uv, ppi, bounds, skipped, cloud)


def unfold_finger(pc: FingerPointCloud, slab: float = DEFAULT_SLAB, ppi: float = DEFAULT_PPI,
                  rectify: bool = True) -> UnfoldedSurface:
    """Chaîne complète : redressement, découpage et dépliage d'un nuage de doigt."""
    if len(pc) < MIN_UNFOLD_POINTS:
        raise ParameterError(f"Au moins {MIN_UNFOLD_POINTS} points requis pour le dépliage (reçu {len(pc)})")
    if rectify:
        pc = rectify_pose(pc)
    return unfold_to_uv(slice_sections(pc, slab), ppi, cloud=pc)


# ---------------------------------------------------------------------------
# Texture
# ---------------------------------------------------------------------------

def texture_coordinates(uv: np.ndarray, tex: GrayImage) -> Tuple[np.ndarray, np.ndarray]:
    """Colonnes / lignes de texture : le centre de la texture coïncide avec l'origine UV."""
    return uv[:, 0] + tex.width / 2.0, -uv[:, 1] + tex.height / 2.0


def sample_texture_all(surface: UnfoldedSurface, tex: GrayImage) -> np.ndarray:
    """Interpolation bilinéaire de la texture pour tous les points (255 hors texture)."""
    cols, rows = texture_coordinates(surface.uv, tex)
    inside = surface.assigned.copy()
    inside[inside] = ((cols[inside] >= 0) & (cols[inside] <= tex.width - 1)
                      & (rows[inside] >= 0) & (rows[inside] <= tex.height - 1))
    values = np.full(len(surface.uv), BACKGROUND)
    values[inside] = ndimage.map_coordinates(
        tex.data, [rows[inside], cols[inside]], order=1, mode="nearest")
    return values


def sample_texture(surface: UnfoldedSurface, tex: GrayImage, point_index: int) -> float:
    """Intensité de texture injectée au point 3D d'indice point_index."""
    u, v = surface.uv_of_point(point_index)
    if np.isnan(u):
        return BACKGROUND
    col = u + tex.width / 2.0
    row = -v + tex.height / 2.0
    if not (0 <= col <= tex.width - 1 and 0 <= row <= tex.height - 1):
        return BACKGROUND
    return float(ndimage.map_coordinates(tex.data, [[row], [col]], order=1, mode="nearest")[0])

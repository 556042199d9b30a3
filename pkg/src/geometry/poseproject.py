"""
Simulation du roulement du doigt et projection orthographique compensée.

Le roulement est une rotation rigide autour de l'axe y. Un θ positif fait
défiler la surface vers +x : le point d'abord à la position angulaire φ
passe en φ + θ, et la ligne de contact (x = 0) porte alors le point dont
la coordonnée standard vaut u = Δu. La projection décale chaque point de
Δu le long de u pour rester dans le repère standard.
"""
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import ndimage

from src.geometry.finger3d import (
    FingerPointCloud,
    UnfoldedSurface,
    px_per_mm,
    sample_texture_all,
    zero_crossing,
)
from src.imaging.imagecore import DEFAULT_PPI, ForegroundMask, GrayImage
from src.utils.errors import BoundsError, ParameterError, VisibilityError

MAX_ROLL_DEG = 60.0
DEFAULT_CANVAS = 512
HOLE_FILL_RADIUS = 2
BACKGROUND = 255.0


@dataclass(frozen=True)
class RollPose:
    """Angle de roulement en degrés, |θ| <= 60."""
    theta: float

    def __post_init__(self):
        if not math.isfinite(self.theta) or abs(self.theta) > MAX_ROLL_DEG:
            raise ParameterError(f"|theta| doit être <= {MAX_ROLL_DEG}° (reçu {self.theta})")

    @property
    def radians(self) -> float:
        return math.radians(self.theta)


@dataclass(frozen=True)
class Canvas:
    width: int = DEFAULT_CANVAS
    height: int = DEFAULT_CANVAS

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ParameterError(f"Canevas invalide {self.width}x{self.height}")

    @property
    def center(self):
        return self.width / 2.0, self.height / 2.0


@dataclass(frozen=True)
class ProjectedImage:
    img: GrayImage
    visibility_mask: ForegroundMask
    delta_u: float

    @property
    def rendered_pixel_count(self) -> int:
        return self.visibility_mask.count


def roll_matrix(theta_deg: float) -> np.ndarray:
    """Rotation autour de +y : x' = x cos θ + z sin θ, z' = -x sin θ + z cos θ."""
    t = math.radians(theta_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0.0, s],
                     [0.0, 1.0, 0.0],
                     [-s, 0.0, c]])


def rotate_cloud(pc: FingerPointCloud, pose: Union[RollPose, float]) -> FingerPointCloud:
    """Rotation rigide du nuage (et des normales) autour de l'axe y."""
    theta = pose.theta if isinstance(pose, RollPose) else float(pose)
    return pc.transformed(roll_matrix(theta))


def compute_delta_u(surface: UnfoldedSurface, pose: RollPose) -> float:
    """
    Compensation Δu (pixels) calculée sur la section centrale.

    Les deux dépliages partagent la même polyligne ; seule l'origine change :
    u mesure l'arc depuis le passage par x = 0 d'origine, u_m depuis le
    passage par x = 0 après rotation. Δu = min(u | V) - min(u_m | V) où V
    est la portion de l'arc tourné dont la normale sortante regarde la caméra.
    """
    section = surface.reference_section()
    if pose.theta == 0:
        return 0.0
    rotation = roll_matrix(pose.theta)
    xz_rot = np.column_stack([
        rotation[0, 0] * section.arc_points[:, 0] + rotation[0, 2] * section.arc_points[:, 1],
        rotation[2, 0] * section.arc_points[:, 0] + rotation[2, 2] * section.arc_points[:, 1],
    ])
    normals = section.outward_normals()
    normal_z = rotation[2, 0] * normals[:, 0] + rotation[2, 2] * normals[:, 1]
    visible = normal_z >= 0
    if not visible.any():
        raise VisibilityError(f"Aucune portion visible à theta={pose.theta}°")

    s0_rotated = zero_crossing(xz_rot[:, 0], xz_rot[:, 1], section.arc_length)
    if s0_rotated is None:
        raise VisibilityError(f"La section tournée de {pose.theta}° ne croise plus x = 0")
    u = section.cumulative_geodesic
    u_m = section.arc_length - s0_rotated
    delta_mm = u[visible].min() - u_m[visible].min()
    return float(delta_mm * surface.scale)


def _fill_holes(image: np.ndarray, hit: np.ndarray):
    """Bouche les trous de rendu par le plus proche pixel rendu (rayon 2 px)."""
    size = 2 * HOLE_FILL_RADIUS + 1
    closed = ndimage.binary_closing(hit, structure=np.ones((size, size), dtype=bool))
    distance, (near_r, near_c) = ndimage.distance_transform_edt(~hit, return_indices=True)
    holes = closed & ~hit & (distance <= HOLE_FILL_RADIUS)
    image[holes] = image[near_r[holes], near_c[holes]]
    return hit | holes


def project(pc_textured: FingerPointCloud, delta_u: float, canvas: Canvas = Canvas(),
            ppi: float = DEFAULT_PPI) -> ProjectedImage:
    """
    Projection orthographique (abandon de z) avec tampon de profondeur.

    Chaque point est posé en (x * échelle + Δu + cx, -y * échelle + cy) ;
    le z maximal l'emporte (caméra côté +z), à égalité le dernier indice.
    """
    if pc_textured.intensities is None:
        raise ParameterError("Le nuage projeté doit porter une intensité par point")
    scale = px_per_mm(ppi)
    cx, cy = canvas.center
    keep = ~np.isnan(pc_textured.intensities)
    index = np.flatnonzero(keep)
    pts = pc_textured.points[keep]
    cols = np.rint(pts[:, 0] * scale + delta_u + cx).astype(np.int64)
    rows = np.rint(-pts[:, 1] * scale + cy).astype(np.int64)
    if index.size and (cols.min() < 0 or rows.min() < 0
                       or cols.max() >= canvas.width or rows.max() >= canvas.height):
        raise BoundsError(
            f"Projection [{cols.min()}, {cols.max()}] x [{rows.min()}, {rows.max()}] "
            f"hors du canevas {canvas.width}x{canvas.height}")

    pixel = rows * canvas.width + cols
    order = np.lexsort((index, pts[:, 2], pixel))
    sorted_pixel = pixel[order]
    last = np.concatenate([sorted_pixel[1:] != sorted_pixel[:-1], [True]]) if order.size else order
    winners = order[last]

    image = np.full(canvas.width * canvas.height, BACKGROUND)
    image[pixel[winners]] = pc_textured.intensities[index[winners]]
    hit = np.zeros(canvas.width * canvas.height, dtype=bool)
    hit[pixel[winners]] = True
    image = image.reshape(canvas.height, canvas.width)
    visible = _fill_holes(image, hit.reshape(canvas.height, canvas.width))
    return ProjectedImage(GrayImage(image, int(ppi)), ForegroundMask(visible), float(delta_u))


def render_pose(surface: UnfoldedSurface, tex: GrayImage, pose: RollPose,
                canvas: Canvas = Canvas()) -> ProjectedImage:
    """Rendu complet d'une pose : texture, rotation, Δu et projection."""
    if surface.cloud is None:
        raise ParameterError("La surface dépliée ne référence aucun nuage")
    values = sample_texture_all(surface, tex)
    values[~surface.assigned] = np.nan
    textured = surface.cloud.with_intensities(values)
    delta_u = compute_delta_u(surface, pose)
    return project(rotate_cloud(textured, pose), delta_u, canvas, surface.ppi)

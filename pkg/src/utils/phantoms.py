"""
Entrées synthétiques : nuages de doigt analytiques et textures de test.
"""
import math

import numpy as np

from src.geometry.finger3d import FingerPointCloud
from src.imaging.imagecore import GrayImage

RIDGE_PERIOD = 9.0


def half_cylinder(radius: float = 8.0, length: float = 4.0, spacing: float = 0.025) -> FingerPointCloud:
    """
    Demi-cylindre d'axe y, face convexe vers +z, centré sur l'origine.

    Le point d'angle φ ∈ [-π/2, π/2] est en (ρ sin φ, y, ρ cos φ) ; l'arc et
    l'axe sont échantillonnés au pas `spacing` (mm).
    """
    n_phi = int(round(math.pi * radius / spacing)) + 1
    n_y = int(round(length / spacing)) + 1
    phi = np.linspace(-math.pi / 2, math.pi / 2, n_phi)
    y = np.linspace(-length / 2, length / 2, n_y)
    pp, yy = np.meshgrid(phi, y)
    pp, yy = pp.ravel(), yy.ravel()
    points = np.column_stack([radius * np.sin(pp), yy, radius * np.cos(pp)])
    normals = np.column_stack([np.sin(pp), np.zeros_like(pp), np.cos(pp)])
    return FingerPointCloud(points, normals)


def finger_phantom(radius: float = 7.0, length: float = 18.0, n_phi: int = 121,
                   n_y: int = 81) -> FingerPointCloud:
    """
    Doigt grossier : demi-cylindre dont les rangées se raréfient vers la pointe (+y).

    y = length * t², t uniforme : la densité décroît vers la pointe, ce qui
    donne une asymétrie positive le long de l'axe longitudinal.
    """
    phi = np.linspace(-math.pi / 2, math.pi / 2, n_phi)
    t = np.linspace(0.0, 1.0, n_y)
    y = length * t ** 2
    pp, yy = np.meshgrid(phi, y - y.mean())
    pp, yy = pp.ravel(), yy.ravel()
    points = np.column_stack([radius * np.sin(pp), yy, radius * np.cos(pp)])
    return FingerPointCloud(points - points.mean(axis=0))


def flat_slab(width: float = 10.0, length: float = 4.0, spacing: float = 0.05) -> FingerPointCloud:
    """Plaque plane z = 0 (cas limite du dépliage : u = x)."""
    xs = np.linspace(-width / 2, width / 2, int(round(width / spacing)) + 1)
    ys = np.linspace(-length / 2, length / 2, int(round(length / spacing)) + 1)
    xx, yy = np.meshgrid(xs, ys)
    return FingerPointCloud(np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)]))


def random_rotation(seed: int = 0) -> np.ndarray:
    """Rotation propre aléatoire (décomposition QR d'une matrice gaussienne)."""
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


# ---------------------------------------------------------------------------
# Textures
# ---------------------------------------------------------------------------

def ridge_texture(width: int = 512, height: int = 512, period: float = RIDGE_PERIOD,
                  angle_deg: float = 30.0, textured_fraction: float = 1.0) -> GrayImage:
    """
    Crêtes sinusoïdales ; seules les premières colonnes (textured_fraction de
    la largeur) portent les crêtes, le reste est blanc uniforme.
    """
    rows, cols = np.mgrid[0:height, 0:width]
    angle = math.radians(angle_deg)
    phase = (cols * math.cos(angle) + rows * math.sin(angle)) * 2 * math.pi / period
    data = 128.0 + 100.0 * np.sin(phase)
    data[:, int(round(textured_fraction * width)):] = 255.0
    return GrayImage(data)


def noise_texture(width: int = 64, height: int = 64, seed: int = 0) -> GrayImage:
    return GrayImage(np.random.default_rng(seed).uniform(0.0, 255.0, (height, width)))


def ramp_texture(width: int = 512, height: int = 512, du: float = 0.35, dv: float = 0.1,
                 base: float = 128.0) -> GrayImage:
    """Rampe affine base + du (c - W/2) + dv (r - H/2), saturée dans [0, 255]."""
    rows, cols = np.mgrid[0:height, 0:width]
    data = base + du * (cols - width / 2.0) + dv * (rows - height / 2.0)
    return GrayImage(np.clip(data, 0.0, 255.0))

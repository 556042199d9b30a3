"""
Hiérarchie d'exceptions de fpforge.

Les erreurs de paramètres héritent de ValueError : la CLI les traduit en code
de sortie 2. Les erreurs d'entrée/sortie restent des OSError (code 1).
"""


class FpforgeError(Exception):
    """Racine de toutes les erreurs métier."""


class ParameterError(FpforgeError, ValueError):
    """Paramètre hors domaine (fenêtre paire, angle hors plage, ...)."""


class DimensionError(FpforgeError, ValueError):
    """Image vide ou dimensions incompatibles."""


class DegenerateCloudError(FpforgeError, ValueError):
    """Nuage de points dont la covariance n'est pas de rang 3."""


class EmptySectionsError(FpforgeError, ValueError):
    """Aucune tranche ne survit au découpage."""


class VisibilityError(FpforgeError, ValueError):
    """Portion visible vide pour le calcul de Δu."""


class BoundsError(FpforgeError, ValueError):
    """Projection hors du canevas."""


class SingularityError(FpforgeError, ArithmeticError):
    """ᾱ_t nul : la prédiction de z0 est indéfinie."""


class FileFormatError(FpforgeError, ValueError):
    """Fichier d'entrée mal formé (PGM, PLY, XYZ, manifeste)."""


class QualityHookError(FpforgeError, RuntimeError):
    """Échec du scoreur de qualité externe."""

    def __init__(self, hook_name: str, message: str):
        super().__init__(f"[{hook_name}] {message}")
        self.hook_name = hook_name

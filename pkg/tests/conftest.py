import pytest

from src.geometry.finger3d import unfold_to_uv, slice_sections
from src.utils import logger
from src.utils.phantoms import half_cylinder

CYLINDER_RADIUS = 8.0
CYLINDER_SPACING = 0.025


@pytest.fixture(autouse=True)
def ledger(tmp_path, monkeypatch):
    """Redirige le journal d'expériences et coupe le mode JSON entre les tests."""
    path = tmp_path / "experiment_data.json"
    monkeypatch.setattr(logger, "LOG_FILE", str(path))
    monkeypatch.setattr(logger, "_JSON_MODE", False)
    return path


@pytest.fixture(scope="session")
def cylinder():
    return half_cylinder(CYLINDER_RADIUS, length=4.0, spacing=CYLINDER_SPACING)


@pytest.fixture(scope="session")
def cylinder_surface(cylinder):
    return unfold_to_uv(slice_sections(cylinder), cloud=cylinder)

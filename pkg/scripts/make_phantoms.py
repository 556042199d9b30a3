"""
Construit un lot de démonstration dans sandbox/ :

    python scripts/make_phantoms.py
    python main.py sweep --manifest-in sandbox/batch.json --out sandbox/out --seed 7
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.utils.phantoms import finger_phantom, ridge_texture  # noqa: E402
from src.utils.tools import write_json, write_pgm, write_ply  # noqa: E402

IDENTITIES = {
    # identifiant : (fraction texturée, période des crêtes, orientation)
    "finger_a": (1.0, 9.0, 30.0),
    "finger_b": (0.9, 8.0, -20.0),
    "finger_sparse": (0.4, 9.0, 60.0),
}


def build(target: Path) -> Path:
    target.mkdir(parents=True, exist_ok=True)
    cloud_path = target / "finger.ply"
    write_ply(str(cloud_path), finger_phantom())
    entries = []
    for identity, (fraction, period, angle) in IDENTITIES.items():
        texture_path = target / f"{identity}.pgm"
        write_pgm(str(texture_path), ridge_texture(period=period, angle_deg=angle,
                                                   textured_fraction=fraction))
        entries.append({"id": identity, "texture": texture_path.name, "cloud": cloud_path.name})
    manifest = target / "batch.json"
    write_json(str(manifest), {"identities": entries})
    print(f"✓ Lot de démonstration écrit : {manifest}")
    return manifest


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Génère le lot de démonstration fpforge")
    parser.add_argument("--out", default="sandbox", help="Dossier cible (défaut : sandbox)")
    build(Path(parser.parse_args().out))

import json
import subprocess
from pathlib import Path

import numpy as np
from PIL import Image

from src.geometry.finger3d import FingerPointCloud, UnfoldedSurface
from src.imaging.imagecore import DEFAULT_PPI, BinaryMap, ForegroundMask, GrayImage
from src.utils.errors import FileFormatError

UV_DTYPE = "<f8"


def read_file(path: str) -> str:
    """
    Lecture sécurisée d'un fichier texte.
    """
    return Path(path).read_text(encoding="utf-8")


def read_json(path: str) -> dict:
    try:
        return json.loads(read_file(path))
    except json.JSONDecodeError as error:
        raise FileFormatError(f"JSON invalide dans {path}: {error}") from error


def write_json(path: str, payload: dict):
    """Écriture JSON déterministe (clés triées, indentation fixe)."""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------------------
# Images PGM (P5, maxval 255)
# ---------------------------------------------------------------------------

def _read_gray_array(path: str) -> np.ndarray:
    try:
        with Image.open(path) as image:
            if image.format != "PPM" or image.mode != "L":
                raise FileFormatError(f"{path}: PGM 8 bits attendu (format {image.format}, mode {image.mode})")
            return np.asarray(image, dtype=np.uint8)
    except (OSError, SyntaxError) as error:
        if isinstance(error, FileNotFoundError):
            raise
        raise FileFormatError(f"{path}: image illisible ({error})") from error


def read_pgm(path: str, ppi: int = DEFAULT_PPI) -> GrayImage:
    return GrayImage(_read_gray_array(path).astype(np.float64), ppi)


def quantize(data: np.ndarray) -> np.ndarray:
    """Quantification 8 bits : arrondi puis saturation."""
    return np.clip(np.rint(data), 0, 255).astype(np.uint8)


def write_pgm(path: str, img):
    """Écrit une GrayImage / BinaryMap / ForegroundMask en PGM binaire."""
    if isinstance(img, ForegroundMask):
        data = np.where(img.data, 255, 0).astype(np.uint8)
    elif isinstance(img, BinaryMap):
        data = img.data
    else:
        data = quantize(img.data)
    Image.fromarray(data, mode="L").save(path, format="PPM")


def read_binary_map(path: str) -> BinaryMap:
    return BinaryMap(_read_gray_array(path))


def read_mask(path: str) -> ForegroundMask:
    """Masque PGM : tout pixel non nul appartient à 𝓜."""
    return ForegroundMask(_read_gray_array(path) > 0)


# ---------------------------------------------------------------------------
# Nuages de points (PLY ASCII, XYZ)
# ---------------------------------------------------------------------------

def _cloud_from_table(table: np.ndarray, columns: list, path: str) -> FingerPointCloud:
    try:
        points = table[:, [columns.index(c) for c in ("x", "y", "z")]]
    except ValueError as error:
        raise FileFormatError(f"{path}: propriétés x, y, z requises") from error
    normals = None
    if all(c in columns for c in ("nx", "ny", "nz")):
        normals = table[:, [columns.index(c) for c in ("nx", "ny", "nz")]]
    return FingerPointCloud(points, normals)


def _parse_ply_header(lines: list, path: str):
    count, columns, in_vertex = None, [], False
    for number, line in enumerate(lines[1:], start=1):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "format" and tokens[1] != "ascii":
            raise FileFormatError(f"{path}: seul le PLY ASCII est pris en charge")
        if tokens[0] == "element":
            in_vertex = tokens[1] == "vertex"
            if in_vertex:
                count = int(tokens[2])
        elif tokens[0] == "property" and in_vertex:
            columns.append(tokens[-1])
        elif tokens[0] == "end_header":
            if count is None:
                break
            return count, columns, number
    raise FileFormatError(f"{path}: élément vertex ou end_header manquant")


def read_ply(path: str) -> FingerPointCloud:
    lines = read_file(path).splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FileFormatError(f"{path}: en-tête PLY absent")
    try:
        count, columns, header_end = _parse_ply_header(lines, path)
        body = lines[header_end + 1:header_end + 1 + count]
        if count < 0 or len(body) < count:
            raise FileFormatError(f"{path}: {count} sommets annoncés, {len(body)} lus")
        rows = [row.split()[:len(columns)] for row in body]
        if any(len(row) != len(columns) for row in rows):
            raise FileFormatError(f"{path}: ligne de sommet incomplète")
        table = np.array(rows, dtype=np.float64).reshape(count, len(columns))
    except FileFormatError:
        raise
    except (ValueError, IndexError) as error:
        raise FileFormatError(f"{path}: PLY illisible ({error})") from error
    return _cloud_from_table(table, columns, path)


def read_xyz(path: str) -> FingerPointCloud:
    try:
        table = np.loadtxt(path, ndmin=2)
    except ValueError as error:
        raise FileFormatError(f"{path}: XYZ illisible ({error})") from error
    if table.shape[1] not in (3, 6):
        raise FileFormatError(f"{path}: 3 ou 6 colonnes attendues, {table.shape[1]} trouvées")
    columns = ["x", "y", "z", "nx", "ny", "nz"][:table.shape[1]]
    return _cloud_from_table(table, columns, path)


def read_cloud(path: str) -> FingerPointCloud:
    """Choisit le lecteur selon l'extension (.ply, sinon XYZ)."""
    if Path(path).suffix.lower() == ".ply":
        return read_ply(path)
    return read_xyz(path)


def write_xyz(path: str, pc: FingerPointCloud):
    table = pc.points if pc.normals is None else np.hstack([pc.points, pc.normals])
    np.savetxt(path, table, fmt="%.9f")


def write_ply(path: str, pc: FingerPointCloud):
    columns = ["x", "y", "z"] + ([] if pc.normals is None else ["nx", "ny", "nz"])
    table = pc.points if pc.normals is None else np.hstack([pc.points, pc.normals])
    header = ["ply", "format ascii 1.0", f"element vertex {len(table)}"]
    header += [f"property double {c}" for c in columns] + ["end_header"]
    np.savetxt(path, table, fmt="%.9f", header="\n".join(header), comments="")


# ---------------------------------------------------------------------------
# Carte UV
# ---------------------------------------------------------------------------

def write_uv_map(path: str, surface: UnfoldedSurface) -> dict:
    """
    Table binaire (indice, u, v) en float64 little-endian + en-tête JSON <out>.json.
    """
    index = np.flatnonzero(surface.assigned)
    table = np.column_stack([index.astype(np.float64), surface.uv[index]])
    Path(path).write_bytes(table.astype(UV_DTYPE).tobytes())
    header = {
        "point_count": len(surface.uv),
        "assigned_count": int(index.size),
        "ppi": surface.ppi,
        "bounds": list(surface.bounds),
        "skipped_sections": surface.skipped_sections,
        "columns": ["point_index", "u", "v"],
        "dtype": UV_DTYPE,
    }
    write_json(str(Path(path).with_suffix(".json")), header)
    return header


def read_uv_map(path: str) -> np.ndarray:
    raw = np.frombuffer(Path(path).read_bytes(), dtype=UV_DTYPE)
    if raw.size % 3:
        raise FileFormatError(f"{path}: taille incompatible avec des triplets float64")
    return raw.reshape(-1, 3)


# ---------------------------------------------------------------------------
# Scoreur de qualité externe
# ---------------------------------------------------------------------------

def run_quality_command(command: str, image_path: str, timeout: float = 120.0) -> str:
    """
    Exécute le scoreur de qualité externe sur une image et retourne sa sortie texte.
    """
    result = subprocess.run(
        [command, image_path],
        capture_output=True,
        text=True,
        timeout=timeout
    )
    if result.returncode != 0:
        raise RuntimeError(f"code de sortie {result.returncode}: {result.stderr.strip()}")
    return result.stdout

"""
Exécution d'un lot d'identités et émission du manifeste.

Chaque identité est traitée indépendamment (graphe LangGraph, pool de
threads) ; le manifeste est assemblé à la fin, dans l'ordre des entrées.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from src.geometry.finger3d import DEFAULT_SLAB
from src.geometry.poseproject import Canvas
from src.imaging.imagecore import DEFAULT_PPI
from src.orchestrator.graph import IdentityWorkflow
from src.orchestrator.sweep import (
    DEFAULT_FG_THRESHOLD,
    DEFAULT_QUALITY_THRESHOLD,
    IdentityInput,
    IdentityRecord,
    QualityHook,
    SweepSpec,
    hook_name,
)
from src.utils.config import FORMAT_VERSION, PROTOCOL_VERSION, TOOL_NAME, __version__
from src.utils.errors import FileFormatError, ParameterError
from src.utils.logger import ActionType, console, log_experiment
from src.utils.tools import read_json, write_json

MANIFEST_FILE = "manifest.json"
RENDERS_FILE = "renders.csv"
RENDER_COLUMNS = ["identity_id", "theta", "image_path", "delta_u_px", "foreground_ratio"]


def load_batch_manifest(path: str) -> List[IdentityInput]:
    """
    Lit un manifeste d'entrée {"identities": [{"id", "texture", "cloud"}, ...]}.

    Les chemins relatifs sont résolus par rapport au dossier du manifeste.
    """
    payload = read_json(path)
    entries = payload.get("identities") if isinstance(payload, dict) else None
    if not isinstance(entries, list):
        raise FileFormatError(f"{path}: liste 'identities' attendue")
    base = Path(path).parent
    inputs = []
    for entry in entries:
        try:
            identity_id, texture, cloud = entry["id"], entry["texture"], entry["cloud"]
        except (KeyError, TypeError) as error:
            raise FileFormatError(f"{path}: entrée incomplète {entry!r}") from error
        inputs.append(IdentityInput(
            str(identity_id),
            str(base / texture) if not os.path.isabs(texture) else texture,
            str(base / cloud) if not os.path.isabs(cloud) else cloud,
        ))
    return inputs


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


def _prepare_out_dir(out_dir: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"Dossier de sortie non inscriptible : {out}")
    return out


def build_manifest(records: Sequence[IdentityRecord], spec: SweepSpec, seed: int,
                   fg_threshold: float, quality_threshold: float,
                   quality_hook: Optional[QualityHook], canvas: Canvas) -> dict:
    passed = [r for r in records if r.passed_filter and r.error is None]
    filtered = [r for r in records if r.filter is not None and not r.filter.passed]
    failed = [r for r in records if r.error is not None]
    return {
        "tool": {"name": TOOL_NAME, "version": __version__, "protocol_version": PROTOCOL_VERSION,
                 "format_version": FORMAT_VERSION},
        "seed": seed,
        "sweep": spec.to_dict(),
        "canvas": {"width": canvas.width, "height": canvas.height},
        "filter": {
            "fg_threshold": fg_threshold,
            "quality_threshold": quality_threshold,
            "quality_hook": hook_name(quality_hook),
        },
        "counts": {
            "identities": len(records),
            "passed": len(passed),
            "filtered": len(filtered),
            "failed": len(failed),
            "images": sum(len(r.renders) for r in records),
        },
        "filter_stats": {
            "mean_foreground_passed": _mean([r.filter.foreground_ratio for r in records
                                             if r.filter is not None and r.filter.passed]),
            "mean_foreground_filtered": _mean([r.filter.foreground_ratio for r in filtered]),
            "reasons": {
                reason: sum(reason in r.filter.reasons for r in filtered)
                for reason in sorted({reason for r in filtered for reason in r.filter.reasons})
            },
        },
        "identities": [r.to_dict() for r in records],
    }


def renders_table(records: Sequence[IdentityRecord]) -> pd.DataFrame:
    rows = [
        {
            "identity_id": r.identity_id,
            "theta": entry.theta,
            "image_path": entry.image_path,
            "delta_u_px": entry.delta_u,
            "foreground_ratio": entry.foreground_ratio,
        }
        for r in records for entry in sorted(r.renders, key=lambda e: e.theta)
    ]
    return pd.DataFrame(rows, columns=RENDER_COLUMNS)


def run_batch(inputs: Sequence[IdentityInput], spec: SweepSpec, out_dir: str, seed: int = 0,
              workers: int = 1, fg_threshold: float = DEFAULT_FG_THRESHOLD,
              quality_hook: Optional[QualityHook] = None,
              quality_threshold: float = DEFAULT_QUALITY_THRESHOLD,
              canvas: Canvas = Canvas(), slab: float = DEFAULT_SLAB,
              ppi: int = DEFAULT_PPI) -> dict:
    """
    Rend toutes les poses des identités retenues et écrit le manifeste.

    Un dossier de sortie inutilisable est fatal (OSError) ; les échecs d'une
    identité sont consignés dans son enregistrement sans interrompre le lot.
    """
    if workers < 1:
        raise ParameterError(f"workers doit être >= 1 (reçu {workers})")
    ids = [identity.identity_id for identity in inputs]
    duplicates = sorted({i for i in ids if ids.count(i) > 1})
    if duplicates:
        raise ParameterError(f"Identifiants dupliqués : {duplicates}")
    out = _prepare_out_dir(out_dir)

    console(f"🚀 Lot de {len(inputs)} identité(s), {spec.total} pose(s) chacune, {workers} worker(s)")
    workflow = IdentityWorkflow(spec, str(out), seed, fg_threshold, quality_hook,
                                quality_threshold, canvas, slab, ppi)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(workflow.run, inputs))

    manifest = build_manifest(records, spec, seed, fg_threshold, quality_threshold,
                              quality_hook, canvas)
    write_json(str(out / MANIFEST_FILE), manifest)
    renders_table(records).to_csv(out / RENDERS_FILE, index=False)

    counts = manifest["counts"]
    log_experiment(
        "pipeline",
        ActionType.SWEEP,
        details={
            "inputs": {"identities": ids, "seed": seed, "sweep": spec.to_dict()},
            "outputs": counts,
        },
        status="SUCCESS" if counts["failed"] == 0 else "PARTIAL_SUCCESS"
    )
    level = "success" if counts["failed"] == 0 else "warning"
    console(f"📊 {counts['passed']} retenue(s), {counts['filtered']} filtrée(s), "
            f"{counts['failed']} en échec, {counts['images']} image(s)", level)
    return manifest

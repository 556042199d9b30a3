import json
import stat
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from src.geometry.finger3d import unfold_finger
from src.geometry.poseproject import RollPose, compute_delta_u
from src.orchestrator.pipeline import MANIFEST_FILE, RENDERS_FILE, load_batch_manifest, run_batch
from src.orchestrator.sweep import (
    CommandQualityHook,
    IdentityInput,
    SweepSpec,
    derive_seed,
    filter_identity,
    plan_sweep,
    theta_filename,
)
from src.utils.errors import FileFormatError, ParameterError, QualityHookError
from src.utils.phantoms import finger_phantom, ridge_texture
from src.utils.tools import read_cloud, read_pgm, write_json, write_pgm, write_ply


@pytest.fixture(scope="module")
def batch_inputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("batch")
    write_ply(str(root / "finger.ply"), finger_phantom())
    write_pgm(str(root / "dense.pgm"), ridge_texture())
    write_pgm(str(root / "sparse.pgm"), ridge_texture(textured_fraction=0.5))
    return root


def _identity(root: Path, name: str, texture: str, cloud: str = "finger.ply") -> IdentityInput:
    return IdentityInput(name, str(root / texture), str(root / cloud))


# --- Protocole de balayage ---

def test_default_sweep_spec():
    spec = SweepSpec()
    assert (spec.n_positive, spec.n_negative, spec.max_angle, spec.include_frontal) == (4, 4, 60, True)
    assert spec.total == 9


@pytest.mark.parametrize("kwargs", [
    {"n_positive": 61}, {"n_negative": -1}, {"max_angle": 0.0}, {"max_angle": 61.0},
    {"max_angle": 3.5, "n_positive": 4},
])
def test_invalid_sweep_spec(kwargs):
    with pytest.raises(ParameterError):
        SweepSpec(**kwargs)


def test_plan_sweep_follows_the_protocol():
    poses = plan_sweep(SweepSpec(), seed=42)
    thetas = [p.theta for p in poses]
    assert len(thetas) == 9
    assert thetas[0] == 0.0
    positive = [t for t in thetas[1:] if t > 0]
    negative = [t for t in thetas[1:] if t < 0]
    assert len(positive) == 4 and all(0 < t <= 60 for t in positive)
    assert len(negative) == 4 and all(-60 <= t < 0 for t in negative)
    assert thetas[1:] == sorted(thetas[1:])
    assert len(set(thetas)) == 9
    assert all(float(t).is_integer() for t in thetas)


def test_plan_sweep_is_deterministic():
    assert plan_sweep(SweepSpec(), 7) == plan_sweep(SweepSpec(), 7)
    assert plan_sweep(SweepSpec(), 7) != plan_sweep(SweepSpec(), 8)


def test_frontal_only_sweep():
    assert plan_sweep(SweepSpec(n_positive=0, n_negative=0), 1) == [RollPose(0.0)]


def test_full_grid_sweep_uses_every_angle():
    thetas = [p.theta for p in plan_sweep(SweepSpec(60, 60, 60.0, False), 3)]
    assert thetas == [float(t) for t in range(-60, 0)] + [float(t) for t in range(1, 61)]


def test_plan_sweep_rejects_negative_seed():
    with pytest.raises(ParameterError):
        plan_sweep(SweepSpec(), -1)


def test_derive_seed():
    assert derive_seed(5, "a") == derive_seed(5, "a")
    assert derive_seed(5, "a") != derive_seed(5, "b")
    assert derive_seed(5, "a") != derive_seed(6, "a")


def test_theta_filename():
    assert theta_filename(-37.0) == "-37.pgm"
    assert theta_filename(0.0) == "0.pgm"
    assert theta_filename(-0.0) == "0.pgm"
    assert theta_filename(12.5) == "12.5.pgm"


# --- Filtrage ---

def test_filter_passes_a_well_covered_texture():
    result = filter_identity(ridge_texture(320, 320, textured_fraction=0.8))
    assert result.passed
    assert result.foreground_ratio == pytest.approx(0.8)
    assert result.reasons == []


def test_filter_rejects_low_foreground():
    result = filter_identity(ridge_texture(320, 320, textured_fraction=0.5))
    assert not result.passed
    assert result.reasons == ["foreground"]


def test_filter_thresholds_are_strict():
    at_threshold = filter_identity(ridge_texture(320, 320, textured_fraction=0.6))
    assert at_threshold.foreground_ratio == pytest.approx(0.6)
    assert not at_threshold.passed

    tex = ridge_texture(320, 320)
    assert filter_identity(tex, quality_hook=lambda _: 0.55).reasons == ["quality"]
    assert filter_identity(tex, quality_hook=lambda _: 0.56).passed


def test_filter_lists_every_reason():
    result = filter_identity(ridge_texture(320, 320, textured_fraction=0.5), quality_hook=lambda _: 0.1)
    assert result.reasons == ["foreground", "quality"]
    assert result.quality_score == 0.1


def test_filter_is_monotone_in_the_threshold():
    textures = [ridge_texture(320, 320, textured_fraction=f) for f in (0.3, 0.55, 0.7, 0.9, 1.0)]
    for tex in textures:
        verdicts = [filter_identity(tex, t).passed for t in np.linspace(0.05, 0.95, 19)]
        assert verdicts == sorted(verdicts, reverse=True)


def test_filter_rejects_invalid_threshold():
    with pytest.raises(ParameterError):
        filter_identity(ridge_texture(64, 64), fg_threshold=1.0)


def test_hook_failures_name_the_hook():
    def broken_scorer(_):
        raise RuntimeError("segfault")

    with pytest.raises(QualityHookError) as info:
        filter_identity(ridge_texture(64, 64), quality_hook=broken_scorer)
    assert info.value.hook_name == "broken_scorer"


def _scorer(tmp_path, body: str) -> str:
    path = tmp_path / "nfiq.sh"
    path.write_text("#!/bin/sh\n" + body + "\n", encoding="utf-8")
    path.chmod(path.stat().st_mode | stat.S_IXUSR)
    return str(path)


def test_command_quality_hook(tmp_path):
    hook = CommandQualityHook(_scorer(tmp_path, 'test -s "$1" && echo 0.7'))
    assert hook(ridge_texture(32, 32)) == pytest.approx(0.7)
    assert hook.name == "nfiq.sh"


@pytest.mark.parametrize("body", ["echo n/a", "exit 4"])
def test_command_quality_hook_failures(tmp_path, body):
    hook = CommandQualityHook(_scorer(tmp_path, body))
    with pytest.raises(QualityHookError, match="nfiq.sh"):
        hook(ridge_texture(32, 32))


# --- Lot ---

def test_batch_renders_passing_identities(batch_inputs, tmp_path):
    inputs = [_identity(batch_inputs, "dense", "dense.pgm"), _identity(batch_inputs, "sparse", "sparse.pgm")]
    manifest = run_batch(inputs, SweepSpec(), str(tmp_path), seed=11)

    assert manifest["counts"] == {"identities": 2, "passed": 1, "filtered": 1, "failed": 0, "images": 9}
    assert len(list(tmp_path.glob("*/*.pgm"))) == 9
    assert manifest["sweep"] == {"n_positive": 4, "n_negative": 4, "max_angle": 60.0, "include_frontal": True}
    assert manifest["tool"] == {"name": "fpforge", "version": "0.1.0", "protocol_version": "1.0",
                                "format_version": "1.0"}
    assert manifest["filter_stats"]["mean_foreground_filtered"] == pytest.approx(0.5)
    assert manifest["filter_stats"]["reasons"] == {"foreground": 1}

    stored = json.loads((tmp_path / MANIFEST_FILE).read_text(encoding="utf-8"))
    assert stored == manifest
    dense, sparse = stored["identities"]
    assert dense["status"] == "rendered" and sparse["status"] == "filtered"
    assert json.loads((tmp_path / "dense" / "record.json").read_text(encoding="utf-8")) == dense

    thetas = [r["theta"] for r in dense["renders"]]
    assert thetas == sorted(thetas) and 0.0 in thetas


def test_manifest_entries_round_trip(batch_inputs, tmp_path):
    run_batch([_identity(batch_inputs, "dense", "dense.pgm")], SweepSpec(2, 2, 60.0, True), str(tmp_path), seed=3)
    manifest = json.loads((tmp_path / MANIFEST_FILE).read_text(encoding="utf-8"))
    surface = unfold_finger(read_cloud(str(batch_inputs / "finger.ply")))
    for render in manifest["identities"][0]["renders"]:
        path = tmp_path / render["image_path"]
        with Image.open(path) as image:
            assert image.format == "PPM" and image.size == (512, 512)
        assert read_pgm(str(path)).data.shape == (512, 512)
        assert render["delta_u"] == compute_delta_u(surface, RollPose(render["theta"]))
        assert 0 < render["foreground_ratio"] < 1


def test_renders_table(batch_inputs, tmp_path):
    run_batch([_identity(batch_inputs, "dense", "dense.pgm")], SweepSpec(1, 1, 60.0, True), str(tmp_path), seed=3)
    table = pd.read_csv(tmp_path / RENDERS_FILE)
    assert list(table.columns) == ["identity_id", "theta", "image_path", "delta_u_px", "foreground_ratio"]
    assert len(table) == 3
    assert list(table["theta"]) == sorted(table["theta"])


def test_batch_rerun_is_byte_identical(batch_inputs, tmp_path):
    inputs = [_identity(batch_inputs, "dense", "dense.pgm"), _identity(batch_inputs, "sparse", "sparse.pgm")]
    run_batch(inputs, SweepSpec(2, 2, 60.0, True), str(tmp_path / "a"), seed=99, workers=1)
    run_batch(inputs, SweepSpec(2, 2, 60.0, True), str(tmp_path / "b"), seed=99, workers=2)
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for relative in files_a:
        assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()


def test_empty_batch_writes_a_valid_manifest(tmp_path):
    manifest = run_batch([], SweepSpec(), str(tmp_path / "out"), seed=0)
    assert manifest["counts"] == {"identities": 0, "passed": 0, "filtered": 0, "failed": 0, "images": 0}
    assert manifest["identities"] == []
    assert (tmp_path / "out" / MANIFEST_FILE).exists()
    assert (tmp_path / "out" / RENDERS_FILE).exists()


def test_identity_failures_do_not_abort_the_batch(batch_inputs, tmp_path):
    inputs = [
        _identity(batch_inputs, "broken", "dense.pgm", cloud="missing.ply"),
        _identity(batch_inputs, "dense", "dense.pgm"),
    ]
    manifest = run_batch(inputs, SweepSpec(1, 1, 60.0, True), str(tmp_path), seed=5)
    assert manifest["counts"]["failed"] == 1
    assert manifest["counts"]["passed"] == 1
    broken = manifest["identities"][0]
    assert broken["status"] == "error" and "missing.ply" in broken["error"]
    assert len(list((tmp_path / "dense").glob("*.pgm"))) == 3


def test_corrupt_cloud_is_recorded_and_the_batch_continues(batch_inputs, tmp_path):
    corrupt = tmp_path / "corrupt.ply"
    corrupt.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
        "property float z\nend_header\n0 0 1\n1 2 abc\n",
        encoding="utf-8",
    )
    inputs = [
        IdentityInput("corrupt", str(batch_inputs / "dense.pgm"), str(corrupt)),
        _identity(batch_inputs, "dense", "dense.pgm"),
    ]
    out = tmp_path / "out"
    manifest = run_batch(inputs, SweepSpec(1, 1, 60.0, True), str(out), seed=1)
    assert (out / MANIFEST_FILE).exists()
    assert manifest["counts"]["failed"] == 1
    failed = manifest["identities"][0]
    assert failed["identity_id"] == "corrupt" and failed["status"] == "error"
    assert "corrupt.ply" in failed["error"]
    good = manifest["identities"][1]
    assert good["status"] == "rendered" and len(good["renders"]) == 3


def test_unwritable_output_is_fatal(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(OSError):
        run_batch([], SweepSpec(), str(blocker), seed=0)


def test_duplicate_identities_are_rejected(batch_inputs, tmp_path):
    twice = [_identity(batch_inputs, "dense", "dense.pgm")] * 2
    with pytest.raises(ParameterError):
        run_batch(twice, SweepSpec(), str(tmp_path), seed=0)


def test_identity_ids_must_be_directory_names():
    with pytest.raises(ParameterError):
        IdentityInput("../escape", "t.pgm", "c.ply")


def test_load_batch_manifest_resolves_relative_paths(tmp_path):
    write_json(str(tmp_path / "batch.json"), {"identities": [{"id": "a", "texture": "a.pgm", "cloud": "/abs/c.ply"}]})
    (identity,) = load_batch_manifest(str(tmp_path / "batch.json"))
    assert identity.texture_path == str(tmp_path / "a.pgm")
    assert identity.cloud_path == "/abs/c.ply"


@pytest.mark.parametrize("payload", ['{"identities": [{"id": "a"}]}', '{"items": []}', "[1, 2]", "{broken"])
def test_load_batch_manifest_rejects_malformed_documents(tmp_path, payload):
    path = tmp_path / "batch.json"
    path.write_text(payload, encoding="utf-8")
    with pytest.raises(FileFormatError):
        load_batch_manifest(str(path))

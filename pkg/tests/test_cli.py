import json

import numpy as np
import pytest

from main import dispatch
from src.imaging.imagecore import ForegroundMask
from src.utils import config as config_module
from src.utils.phantoms import finger_phantom, noise_texture, ridge_texture
from src.utils.tools import read_binary_map, write_json, write_pgm, write_ply

HELP_FLAGS = {
    "binarize": ["--in", "--out", "--mask", "--window", "--k", "--range", "--config", "--json-log"],
    "unfold": ["--cloud", "--out", "--slab", "--ppi", "--no-rectify", "--config", "--json-log"],
    "project": ["--cloud", "--texture", "--theta", "--out", "--canvas", "--slab", "--config", "--json-log"],
    "sweep": ["--manifest-in", "--out", "--seed", "--workers", "--fg-threshold", "--quality-cmd",
              "--config", "--json-log"],
    "ddim-demo": ["--steps", "--grid", "--seed", "--config", "--json-log"],
}


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.setattr(config_module, "load_dotenv", lambda: None)
    monkeypatch.delenv("FPFORGE_WORKERS", raising=False)
    monkeypatch.delenv("FPFORGE_QUALITY_CMD", raising=False)
    monkeypatch.delenv("FPFORGE_LOG_FILE", raising=False)


@pytest.fixture(scope="module")
def finger_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    write_ply(str(root / "finger.ply"), finger_phantom())
    write_pgm(str(root / "texture.pgm"), ridge_texture())
    return root


@pytest.mark.parametrize("command", sorted(HELP_FLAGS))
def test_help_lists_every_flag(command, capsys):
    assert dispatch([command, "--help"]) == 0
    out = capsys.readouterr().out
    for flag in HELP_FLAGS[command]:
        assert flag in out
    assert out.count("défaut") >= len(HELP_FLAGS[command]) - 4


def test_top_level_help_lists_subcommands(capsys):
    assert dispatch(["--help"]) == 0
    out = capsys.readouterr().out
    for command in HELP_FLAGS:
        assert command in out


def test_version(capsys):
    assert dispatch(["--version"]) == 0
    assert capsys.readouterr().out.strip() == "fpforge 0.1.0 (protocole 1.0, format de sortie 1.0)"


def test_unknown_subcommand_is_a_usage_error(capsys):
    assert dispatch(["nosuch"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand_is_a_usage_error():
    assert dispatch([]) == 2


def test_binarize_happy_path(tmp_path):
    write_pgm(str(tmp_path / "a.pgm"), ridge_texture(128, 128))
    assert dispatch(["binarize", "--in", str(tmp_path / "a.pgm"), "--out", str(tmp_path / "b.pgm")]) == 0
    result = read_binary_map(str(tmp_path / "b.pgm"))
    assert set(np.unique(result.data)) == {0, 255}


def test_binarize_with_explicit_mask(tmp_path):
    write_pgm(str(tmp_path / "a.pgm"), noise_texture(32, 32))
    mask = np.zeros((32, 32), dtype=bool)
    mask[8:24, 8:24] = True
    write_pgm(str(tmp_path / "m.pgm"), ForegroundMask(mask))
    code = dispatch(["binarize", "--in", str(tmp_path / "a.pgm"), "--out", str(tmp_path / "b.pgm"),
                     "--mask", str(tmp_path / "m.pgm"), "--k", "0.2"])
    assert code == 0
    assert np.all(read_binary_map(str(tmp_path / "b.pgm")).data[~mask] == 255)


def test_binarize_rejects_even_window(tmp_path):
    write_pgm(str(tmp_path / "a.pgm"), noise_texture(16, 16))
    assert dispatch(["binarize", "--in", str(tmp_path / "a.pgm"), "--out", str(tmp_path / "b.pgm"),
                     "--window", "10"]) == 2


def test_missing_input_is_an_io_failure(tmp_path):
    assert dispatch(["binarize", "--in", str(tmp_path / "absent.pgm"), "--out", str(tmp_path / "b.pgm")]) == 1


def test_explicit_flags_override_the_config_file(tmp_path, ledger):
    write_pgm(str(tmp_path / "a.pgm"), noise_texture(16, 16))
    config = tmp_path / "fpforge.json"
    write_json(str(config), {"sauvola": {"w": 15, "k": 0.1}})
    base = ["binarize", "--in", str(tmp_path / "a.pgm"), "--out", str(tmp_path / "b.pgm"), "--config", str(config)]

    assert dispatch(base) == 0
    assert dispatch(base + ["--window", "9"]) == 0
    entries = [e for e in json.loads(ledger.read_text(encoding="utf-8")) if e["action"] == "BINARIZE"]
    assert [e["details"]["inputs"]["params"]["w"] for e in entries] == [15, 9]
    assert [e["details"]["inputs"]["params"]["k"] for e in entries] == [0.1, 0.1]


def test_unknown_config_key_is_a_parameter_error(tmp_path):
    config = tmp_path / "fpforge.json"
    write_json(str(config), {"colour": "blue"})
    assert dispatch(["ddim-demo", "--steps", "10", "--config", str(config)]) == 2


def test_project_rejects_large_roll(tmp_path):
    code = dispatch(["project", "--cloud", str(tmp_path / "c.ply"), "--texture", str(tmp_path / "t.pgm"),
                     "--theta", "75", "--out", str(tmp_path / "o.pgm")])
    assert code == 2


def test_project_writes_image_and_sidecar(finger_files, tmp_path):
    out = tmp_path / "rolled.pgm"
    code = dispatch(["project", "--cloud", str(finger_files / "finger.ply"),
                     "--texture", str(finger_files / "texture.pgm"), "--theta", "30", "--out", str(out)])
    assert code == 0
    sidecar = json.loads((tmp_path / "rolled.json").read_text(encoding="utf-8"))
    assert sidecar["theta"] == 30.0
    assert sidecar["delta_u_px"] < 0
    assert sidecar["rendered_pixel_count"] > 0
    assert out.exists()


def test_project_canvas_too_small(finger_files, tmp_path):
    code = dispatch(["project", "--cloud", str(finger_files / "finger.ply"),
                     "--texture", str(finger_files / "texture.pgm"), "--theta", "0",
                     "--out", str(tmp_path / "o.pgm"), "--canvas", "64"])
    assert code == 2


def test_unfold_writes_uv_map(finger_files, tmp_path):
    out = tmp_path / "finger.uv"
    assert dispatch(["unfold", "--cloud", str(finger_files / "finger.ply"), "--out", str(out)]) == 0
    header = json.loads((tmp_path / "finger.json").read_text(encoding="utf-8"))
    assert header["point_count"] == len(finger_phantom())
    assert out.stat().st_size == 24 * header["assigned_count"]


def test_sweep_command(finger_files, tmp_path):
    write_json(str(tmp_path / "batch.json"), {"identities": [
        {"id": "one", "texture": str(finger_files / "texture.pgm"), "cloud": str(finger_files / "finger.ply")},
    ]})
    code = dispatch(["sweep", "--manifest-in", str(tmp_path / "batch.json"), "--out", str(tmp_path / "out"),
                     "--seed", "4", "--workers", "2"])
    assert code == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["counts"]["images"] == 9
    assert manifest["seed"] == 4


def test_sweep_rejects_out_of_range_threshold(tmp_path):
    write_json(str(tmp_path / "batch.json"), {"identities": []})
    code = dispatch(["sweep", "--manifest-in", str(tmp_path / "batch.json"), "--out", str(tmp_path / "out"),
                     "--fg-threshold", "1.2"])
    assert code == 2


def test_ddim_demo_prints_one_json_line(capsys):
    assert dispatch(["ddim-demo", "--steps", "50", "--grid", "3x16x16", "--seed", "9"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1
    summary = json.loads(lines[0])
    assert summary["generator"] == "numpy.random.PCG64"
    assert summary["seed"] == 9 and summary["steps"] == 50
    assert summary["max_abs_error"] <= 1e-5


def test_json_log_mode_keeps_stdout_for_data(tmp_path, capsys):
    write_pgm(str(tmp_path / "a.pgm"), noise_texture(16, 16))
    assert dispatch(["binarize", "--in", str(tmp_path / "a.pgm"), "--out", str(tmp_path / "b.pgm"),
                     "--json-log"]) == 0
    captured = capsys.readouterr()
    assert captured.out == ""
    record = json.loads(captured.err.strip().splitlines()[-1])
    assert record["level"] == "success"


def test_negative_seed_is_a_usage_error():
    assert dispatch(["ddim-demo", "--seed", "-1"]) == 2

import json
import shutil

import pytest

from app.cli import main
from app.schemas import SimNoise

from conftest import small_simulation


def write_config(path, model):
    path.write_text(model.model_dump_json())
    return str(path)


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = write_config(root / "sim.json", small_simulation(frames=3, noise=SimNoise(dropout_probability=0.0)))
    assert main(["--quiet", "simulate", "--config", config, "--out", str(root / "data")]) == 0
    return root


@pytest.fixture(scope="module")
def tracked(simulated):
    run = simulated / "run"
    assert main(["--quiet", "track", str(simulated / "data"), "--out", str(run)]) == 0
    return run


def test_track_writes_a_trajectory_and_manifest(simulated, tracked):
    lines = (tracked / "trajectory.jsonl").read_text().splitlines()
    assert len(lines) == 3
    manifest = json.loads((tracked / "manifest.json").read_text())
    assert manifest["status"] == "completed"
    assert manifest["ablation"] is None
    assert len(manifest["frame_timings"]) == 3
    assert manifest["timing"] is not None


def test_evaluate_prints_and_saves_a_report(simulated, tracked, capsys):
    out = simulated / "report.json"
    assert main(["--quiet", "evaluate", str(tracked), str(simulated / "data"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["frames_evaluated"] == 3
    assert report["rod_evaluations"] == 9
    printed = capsys.readouterr().out
    assert "2cm-5deg" in printed and "translation (cm)" in printed


def test_plot_writes_one_figure_per_cable_and_rod(simulated, tracked):
    out = simulated / "plots"
    assert main(["--quiet", "plot", str(tracked / "trajectory.jsonl"), str(simulated / "data"), "--out", str(out)]) == 0
    assert len(list(out.glob("cable_*.svg"))) == 9
    assert len(list(out.glob("rod_*_error.svg"))) == 3
    assert (out / "cables.csv").exists()
    assert (out / "rod_errors.csv").exists()


def test_ablation_is_recorded(simulated):
    run = simulated / "ablation"
    args = ["--quiet", "track", str(simulated / "data"), "--out", str(run), "--ablation", "no_rod_constraints"]
    assert main(args + ["--max-frames", "2"]) == 0
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["ablation"] == "no_rod_constraints"
    assert manifest["max_frames"] == 2
    assert len((run / "trajectory.jsonl").read_text().splitlines()) == 2


def test_invalid_configuration_is_a_usage_error(tmp_path):
    bad = small_simulation().model_dump()
    bad["noise"]["depth_sigma"] = -0.01
    config = tmp_path / "bad.json"
    config.write_text(json.dumps(bad))
    assert main(["--quiet", "simulate", "--config", str(config), "--out", str(tmp_path / "data")]) == 2
    assert not (tmp_path / "data").exists()

    config.write_text("{not json")
    assert main(["--quiet", "simulate", "--config", str(config), "--out", str(tmp_path / "data")]) == 2


def test_non_positive_max_frames_is_rejected(simulated, tmp_path):
    assert main(["--quiet", "track", str(simulated / "data"), "--out", str(tmp_path / "run"), "--max-frames", "0"]) == 2


def test_unknown_ablation_is_rejected_by_the_parser(simulated, tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["track", str(simulated / "data"), "--out", str(tmp_path / "run"), "--ablation", "magic"])
    assert excinfo.value.code == 2


def test_evaluation_without_ground_truth_fails(simulated, tracked, tmp_path):
    data = tmp_path / "data"
    shutil.copytree(simulated / "data", data)
    shutil.rmtree(data / "gt")
    assert main(["--quiet", "evaluate", str(tracked), str(data), "--out", str(tmp_path / "report.json")]) == 3


def test_corrupt_frame_fails_the_run(simulated, tmp_path):
    data = tmp_path / "data"
    shutil.copytree(simulated / "data", data)
    frame = data / "frames" / "000001.depthhsv"
    frame.write_bytes(frame.read_bytes()[:100])

    run = tmp_path / "run"
    assert main(["--quiet", "track", str(data), "--out", str(run)]) == 3
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert "frame 1" in manifest["error"]
    assert not (run / "trajectory.jsonl").exists()

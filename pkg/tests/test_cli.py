import json

import numpy as np
import pytest

from poresim.cli import main
from poresim.config import PipelineConfig, thread_count
from poresim.errors import InvalidParameterError
from poresim.imagecore import read_png
from poresim.rfregress import ForestConfig, RandomForestModel, fit_forest


@pytest.fixture
def sheet(tmp_path):
    assert main(["gen-sheet", "--out", str(tmp_path / "sheet.png"), "--truth", str(tmp_path / "truth.png"),
                 "--pores", str(tmp_path / "pores.csv"), "--width", "160", "--height", "140",
                 "--n-pores", "8", "--seed", "4"]) == 0
    return tmp_path


def test_config_roundtrip(tmp_path):
    cfg = PipelineConfig()
    cfg.detection.response_threshold = 0.03
    cfg.forest.n_trees = 17
    cfg.save(tmp_path / "c.json")
    again = PipelineConfig.load(tmp_path / "c.json")
    assert again == cfg
    again.save(tmp_path / "d.json")
    assert (tmp_path / "c.json").read_text() == (tmp_path / "d.json").read_text()
    assert again.digest() == cfg.digest()


def test_config_rejects_unknown(tmp_path):
    with pytest.raises(InvalidParameterError):
        PipelineConfig.from_dict({"bogus": 1})
    with pytest.raises(InvalidParameterError):
        PipelineConfig.from_dict({"detection": {"sigma9": 1}})


def test_thread_count(monkeypatch):
    monkeypatch.setenv("PORESIM_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("PORESIM_THREADS", "0")
    assert thread_count() >= 1
    monkeypatch.setenv("PORESIM_THREADS", "x")
    with pytest.raises(InvalidParameterError):
        thread_count()


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["segment"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code == 2


def test_processing_error_exit_code(tmp_path, capsys):
    assert main(["segment", "--in", str(tmp_path / "missing.png"), "--out", str(tmp_path / "m.png")]) == 1
    assert "error" in capsys.readouterr().err


def test_eval_seg_identical(sheet, capsys):
    capsys.readouterr()
    truth = str(sheet / "truth.png")
    assert main(["eval-seg", "--pred", truth, "--truth", truth]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [ln.split("\t")[0] for ln in lines] == ["dice", "iou", "precision", "accuracy"]
    assert all(float(ln.split("\t")[1]) == 1.0 for ln in lines)


def test_segment_outputs(sheet, capsys):
    assert main(["segment", "--in", str(sheet / "sheet.png"), "--out", str(sheet / "mask.png"),
                 "--components", str(sheet / "comps.csv")]) == 0
    mask = read_png(sheet / "mask.png")
    assert set(np.unique(mask)) <= {0.0, 1.0}
    rows = (sheet / "comps.csv").read_text().splitlines()
    assert rows[0] == "id,cx,cy,area,ecc,orient,circle_x,circle_y,radius"
    assert len(rows) == 9


def test_simulate_rho_one_byte_identical(sheet, capsys):
    X = np.column_stack([np.tile([1.0, 2.0, 3.0], 3), np.ones(9), np.zeros(9)])
    fit_forest(X, np.ones(9), ForestConfig(n_trees=2)).save(sheet / "one.json")
    assert main(["simulate", "--in", str(sheet / "sheet.png"), "--model", str(sheet / "one.json"),
                 "--window", "TW10", "--out", str(sheet / "sim.png"), "--flow", str(sheet / "f.psff")]) == 0
    np.testing.assert_array_equal(read_png(sheet / "sim.png"), read_png(sheet / "sheet.png"))
    assert (sheet / "f.psff").read_bytes()[:4] == b"PSFF"


def test_clean_analyze_train_with_report(tmp_path, capsys):
    series = tmp_path / "series.csv"
    assert main(["gen-cohort", "--out", str(series), "--truth", str(tmp_path / "out.csv"), "--subjects", "12",
                 "--outlier-rate", "0.05", "--extra-index", "Pore_Count=0", "--seed", "3"]) == 0
    assert main(["clean", "--in", str(series), "--out", str(tmp_path / "kept.csv"),
                 "--removed", str(tmp_path / "removed.csv"), "--window", "3", "--k", "1.0"]) == 0
    n_in = len(series.read_text().splitlines())
    n_kept = len((tmp_path / "kept.csv").read_text().splitlines())
    n_rem = len((tmp_path / "removed.csv").read_text().splitlines())
    assert n_kept + n_rem == n_in + 1
    assert main(["analyze", "--in", str(tmp_path / "kept.csv"), "--report", str(tmp_path / "rep.json")]) == 0
    report = json.loads((tmp_path / "rep.json").read_text())
    assert report["representative"] == "Pore_Area_total"
    for seed_run in ("a", "b"):
        assert main(["--run-report", str(tmp_path / f"run_{seed_run}.json"), "train", "--in",
                     str(tmp_path / "kept.csv"), "--model", str(tmp_path / f"m_{seed_run}.json"), "--seed", "7"]) == 0
    assert (tmp_path / "m_a.json").read_bytes() == (tmp_path / "m_b.json").read_bytes()
    run = json.loads((tmp_path / "run_a.json").read_text())
    assert run["seed"] == 7
    assert len(run["config_sha256"]) == 64
    assert {"poresim", "python", "numpy"} <= set(run["versions"])
    RandomForestModel.load(tmp_path / "m_a.json")

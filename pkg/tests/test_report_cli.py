import csv
import json
import os

import pytest

from inhocfl import attribution, cli, datagen, report
from inhocfl.federation import RoundTrace

MINIMAL = {
    "n_slices": 1, "alpha": [0.0], "beta": [3.0], "nu": [0.82],
    "n_cls": 2, "rounds": 2, "local_epochs": 2, "dataset_size": 40,
    "batch_size": 16, "oracle_steps": 0, "r_lambda": 5.0, "mu": 2.0,
    "ig_steps": 8, "explain_batch": 16, "layer_sizes": [5, 8, 1],
    "record_wall_time": False,
}


def write_config(tmp_path, name="cfg.json", **kw):
    doc = dict(MINIMAL, output_dir=str(tmp_path / "run"))
    doc.update(kw)
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=1))
    return path


def test_missing_config_exits_2_naming_path(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert cli.main(["run", "--config", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_config_exits_2_with_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n "n_cls": 2,\n "rounds": 0\n}')
    assert cli.main(["run", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "invalid config" in err and f"{path}:3" in err
    path.write_text('{\n "n_cls": 2,\n}')
    assert cli.main(["run", "--config", str(path)]) == 2


def test_minimal_run_writes_parseable_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "run"
    rounds = report.read_rounds(out)
    assert [r.round for r in rounds] == [1, 2]
    with open(out / "attributions.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 8 * 5  # two CLs, 20 % test split of 40, five features
    assert tuple(rows[0]) == report.ATTRIBUTIONS_HEADER
    with open(out / "timing.csv") as fh:
        timing = list(csv.DictReader(fh))
    assert timing[0]["slice"] == "eMBB" and 1 <= int(timing[0]["convergence_round"]) <= 2
    man = json.loads((out / "manifest.json").read_text())
    assert man["format"] == report.MANIFEST_FORMAT and man["config"]["n_cls"] == 2
    summary = json.loads((out / "attribution_summary.json").read_text())
    assert [d["feature"] for d in summary["eMBB"]] == ["ott1", "ott2", "ott3", "cqi", "mimo"]
    assert not [f for f in os.listdir(out) if f.startswith(".tmp-")]


def test_cli_overrides(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "shap"
    assert cli.main(["run", "--config", str(cfg), "--mode", "post_hoc", "--xai", "shap",
                     "--seed", "3", "--out", str(out)]) == 0
    r = report.read_rounds(out)[0]
    assert r.mode == "post_hoc_baseline" and r.xai_method == "ShapSampling"
    assert json.loads((out / "manifest.json").read_text())["seed"] == 3


def test_identical_runs_give_identical_rounds_csv(tmp_path):
    a = write_config(tmp_path, "a.json", output_dir=str(tmp_path / "a"))
    b = write_config(tmp_path, "b.json", output_dir=str(tmp_path / "b"))
    assert cli.main(["run", "--config", str(a)]) == 0
    assert cli.main(["run", "--config", str(b)]) == 0
    assert (tmp_path / "a" / "rounds.csv").read_bytes() == (tmp_path / "b" / "rounds.csv").read_bytes()


def test_manifest_rerun_reproduces_rounds(tmp_path):
    cfg = write_config(tmp_path)
    assert cli.main(["run", "--config", str(cfg)]) == 0
    first = (tmp_path / "run" / "rounds.csv").read_bytes()
    assert cli.main(["run", "--config", str(tmp_path / "run" / "manifest.json"),
                     "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "rounds.csv").read_bytes() == first


def test_rounds_csv_round_trip():
    rows = [RoundTrace(1, "eMBB", "in_hoc", "IG", 0.5, 0.9, -0.1, 1.25, -0.08, 3),
            RoundTrace(2, "eMBB", "in_hoc", "IG", 0.1 + 0.2, 1.0, -0.2, 0.0, -0.18, 2)]
    assert report.parse_rounds_csv(report.rounds_to_csv(rows)) == rows
    zeroed = report.parse_rounds_csv(report.rounds_to_csv(rows, record_wall_time=False))
    assert [r.wall_time_s for r in zeroed] == [0.0, 0.0]


def test_truncated_rounds_csv_is_a_schema_error():
    text = report.rounds_to_csv([RoundTrace(1, "eMBB", "in_hoc", "IG", 0.5, 0.9, -0.1, 1.0, 0.0, 2)])
    cut = text[: text.rindex(",")]
    with pytest.raises(report.SchemaError, match="participating_cls"):
        report.parse_rounds_csv(cut)
    with pytest.raises(report.SchemaError, match="missing column"):
        report.parse_rounds_csv("round,slice\n1,eMBB\n")


def test_compare_with_itself_and_truncated_input(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["run", "--config", str(cfg)]) == 0
    run = str(tmp_path / "run")
    rows, summary = report.compare_runs([run, run])
    assert all(r["delta_loss"] == 0 and r["delta_confidence"] == 0 for r in rows)
    assert all(s["delta_loss"] == 0 for s in summary)

    broken = tmp_path / "broken"
    broken.mkdir()
    text = (tmp_path / "run" / "rounds.csv").read_text()
    (broken / "rounds.csv").write_text(text[: text.rindex(",")])
    target = tmp_path / "cmp.csv"
    assert cli.main(["compare", run, str(broken), "--out", str(target)]) == 1
    assert not target.exists()
    assert "truncated" in capsys.readouterr().err


def test_convergence_round_rule():
    assert report.convergence_round([10.0, 5.0, 2.0, 1.04, 1.0]) == 4
    assert report.convergence_round([3.0, 2.0, 1.0], override=2) == 2
    assert report.convergence_round([1.0]) == 1


def test_timing_table_uses_per_slice_override():
    rows = [RoundTrace(t, s, "in_hoc", "IG", 1.0 / t, 1.0, 0.0, 1.0, 0.0, 2)
            for t in (1, 2, 3) for s in ("eMBB", "Browsing")]
    table = {r["slice"]: r for r in report.timing_table(rows, {"eMBB": 1, "Browsing": 2})}
    assert table["eMBB"]["cumulative_wall_time_s"] == 1.0
    assert table["Browsing"]["cumulative_wall_time_s"] == 2.0


def test_gen_data_dumps_csv(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "data"
    assert cli.main(["gen-data", "--config", str(cfg), "--out", str(out)]) == 0
    files = sorted(os.listdir(out))
    assert files == ["eMBB_cl001_test.csv", "eMBB_cl001_train.csv",
                     "eMBB_cl002_test.csv", "eMBB_cl002_train.csv"]
    assert len(datagen.load_csv(out / "eMBB_cl001_train.csv")) == 32


def test_attribution_csv_header_is_documented():
    assert report.ATTRIBUTIONS_HEADER[1:] == attribution.ATTRIBUTION_CSV_HEADER

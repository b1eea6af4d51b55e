import json

from click.testing import CliRunner

from vadkit.cli import main


def test_synth_run_eval_compare_pipeline(tmp_path):
    runner = CliRunner()

    r = runner.invoke(main, ["synth", "--seed", "3", "--out", str(tmp_path / "scn")])
    assert r.exit_code == 0, r.output
    assert (tmp_path / "scn" / "world.json").exists()
    assert (tmp_path / "scn" / "gt" / "gt.json").exists()

    r = runner.invoke(
        main,
        ["run", "--world", str(tmp_path / "scn" / "world.json"), "--seed", "3",
         "--out", str(tmp_path / "run")],
    )
    assert r.exit_code == 0, r.output
    assert (tmp_path / "run" / "manifest.json").exists()
    ledger = json.loads((tmp_path / "run" / "ledger.json").read_text())
    assert ledger["vlm_calls"] == 10  # 2 clips x M=5

    r = runner.invoke(
        main,
        ["eval", "--manifest", str(tmp_path / "run"), "--gt", str(tmp_path / "scn" / "gt"),
         "--out", str(tmp_path / "report.json")],
    )
    assert r.exit_code == 0, r.output
    report = json.loads((tmp_path / "report.json").read_text())
    assert set(report) >= {"frame_auroc", "pixel_auroc", "pixel_ap", "pixel_aupro",
                           "pixel_f1", "rbdc", "tbdc"}
    assert report["frame_auroc"] is not None and report["frame_auroc"] > 0.5

    r = runner.invoke(main, ["compare", "--world", str(tmp_path / "scn" / "world.json")])
    assert r.exit_code == 0, r.output
    table = json.loads(r.output)
    assert {row["paradigm"] for row in table["rows"]} == {"uniform", "gridvad"}


def test_run_requires_a_source(tmp_path):
    r = CliRunner().invoke(main, ["run", "--out", str(tmp_path / "x")])
    assert r.exit_code != 0
    assert "--world" in r.output or "--frames" in r.output


def test_eval_mismatched_args(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    (tmp_path / "c").mkdir()
    r = CliRunner().invoke(
        main, ["eval", "--manifest", str(tmp_path / "a"), "--gt", str(tmp_path / "b"),
               "--gt", str(tmp_path / "c")]
    )
    assert r.exit_code != 0


def test_eval_reports_manifest_error(tmp_path):
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "manifest.json").write_text("{broken")
    gt = tmp_path / "gt"
    gt.mkdir()
    r = CliRunner().invoke(main, ["eval", "--manifest", str(bad), "--gt", str(gt)])
    assert r.exit_code != 0
    assert "JSON" in r.output


def test_ablate_scc_smoke(tmp_path):
    r = CliRunner().invoke(
        main,
        ["ablate-scc", "--seeds", "2", "--arm", "1:1", "--arm", "5:3",
         "--out", str(tmp_path / "ablation.json")],
    )
    assert r.exit_code == 0, r.output
    rows = json.loads((tmp_path / "ablation.json").read_text())
    assert [(row["M"], row["tau"]) for row in rows] == [(1, 1), (5, 3)]


def test_ablate_scc_rejects_bad_arm():
    r = CliRunner().invoke(main, ["ablate-scc", "--seeds", "1", "--arm", "five"])
    assert r.exit_code != 0

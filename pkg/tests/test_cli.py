import json
import subprocess
import sys
from pathlib import Path

import pytest

from fracext.cli import RunConfig, main, resolve_config

GOLDEN = Path(__file__).parent / "golden"
SMALL = ["--mc-samples", "1000", "--centers", "20", "--radii", "5"]


def _run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    return code, out


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"level": 5, "seed": 9, "s": 0.3}))
    cfg = resolve_config(["norms", "--config", str(cfg_file), "--seed", "4"])
    assert (cfg.level, cfg.seed, cfg.s, cfg.p) == (5, 4, 0.3, 2.0)
    assert isinstance(cfg, RunConfig) and cfg.command == "norms"


def test_config_errors_exit_3(tmp_path, capsys):
    assert main(["norms", "--s", "1.5", "--out", str(tmp_path)]) == 3
    err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert err["error"] == "config_error" and err["exit_code"] == 3
    assert main(["norms", "--geometry", "triangle", "--out", str(tmp_path)]) == 3
    assert json.loads((tmp_path / "error.json").read_text())["config"]["geometry"] == "triangle"
    assert main(["norms", "--bogus"]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"levle": 3}))
    assert main(["norms", "--config", str(bad)]) == 3


def test_check_itc_halfplane_passes(tmp_path):
    code, out = _run(tmp_path, "check-itc", "--geometry", "halfplane", "--level", "7", *SMALL, "--assert-pass")
    assert code == 0
    summary = json.loads((out / "itc.json").read_text())
    assert summary["verdict"] == "PASS" and abs(summary["inf_density"] - 0.5) < 0.08
    assert summary["config"]["geometry"] == "halfplane"


def test_asserted_pass_that_fails_exits_2(tmp_path):
    code, out = _run(tmp_path, "check-itc", "--geometry", "exp_whitney_cusp", "--level", "7", "--on", "N",
                     *SMALL, "--assert-pass")
    assert code == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "contract_violation" and "FAIL" in err["message"]


def test_check_degenerate_exp(tmp_path):
    code, out = _run(tmp_path, "check-degenerate", "--geometry", "exp_whitney_cusp", "--level", "8",
                     "--mc-samples", "2000", "--centers", "60", "--radii", "10")
    assert code == 0
    summary = json.loads((out / "degenerate.json").read_text())
    assert summary["verdict_pair"] == ["PASS", "FAIL"]


def test_every_artifact_embeds_the_config(tmp_path):
    out = tmp_path / "o"
    for cmd in ("decompose", "fatten", "norms", "extend"):
        assert main([cmd, "--level", "5", *SMALL, "--lemma31-pairs", "2000", "--out", str(out)]) == 0
    stamp = None
    for path in sorted(out.iterdir()):
        if path.suffix == ".json":
            cfg = json.loads(path.read_text())["config"]
            assert cfg["level"] == 5 and "out" not in cfg
        elif path.suffix == ".csv":
            head = path.read_text().splitlines()[0]
            assert head.startswith("# ")
            assert '"level": 5' in head
        elif path.suffix == ".pgm":
            stamp = path.read_bytes().split(b"\n")[1]
            assert stamp.startswith(b"# config=")
    assert stamp is not None


def test_report_matches_golden(tmp_path):
    code, out = _run(tmp_path, "report", "--config", str(GOLDEN / "report_cusp_L6.config.json"),
                     "--golden", str(GOLDEN / "report_cusp_L6.json"))
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["corpus_size"] == 20 and rep["max_restriction_deviation"] == 0.0


def test_golden_mismatch_exits_2(tmp_path):
    ref = json.loads((GOLDEN / "report_cusp_L6.json").read_text())
    ref["max_ratio"] *= 1.01
    doctored = tmp_path / "g.json"
    doctored.write_text(json.dumps(ref))
    code, out = _run(tmp_path, "report", "--config", str(GOLDEN / "report_cusp_L6.config.json"),
                     "--golden", str(doctored))
    assert code == 2
    assert "max_ratio" in json.loads((out / "error.json").read_text())["message"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fracext", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "report" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "fracext", "decompose", "--level", "4", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads((tmp_path / "decompose.json").read_text())["config"]["level"] == 4


@pytest.mark.parametrize("flag", ["--threads", "--seed"])
def test_flags_accept_integers(flag):
    assert getattr(resolve_config(["norms", flag, "1"]), flag[2:]) == 1

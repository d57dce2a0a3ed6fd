import json
import subprocess
import sys

import pytest

from evanscompat import cli, lp as lpmod
from evanscompat.dist import JointDistribution
from evanscompat.lp import FarkasCertificate


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def write_gpt_point(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({"variables": [{"name": n, "card": 2} for n in "ABC"],
                                "probs": ["1/2", "0", "0", "0", "0", "1/2", "0", "0"]}))
    return path


def test_gen_pr_box_writes_exact_file(tmp_path, capsys):
    out = tmp_path / "pr.json"
    code, text, _ = run(["gen", "pr-box", "--pa", "10/21,1/21,10/21", "--out", out], capsys)
    assert code == 0 and "gen pr-box: ok" in text
    p = JointDistribution.from_json(json.loads(out.read_text()))
    assert p.exact and str(p.probs[1, 0, 0]) == "1/42"


def test_gen_rejects_bad_marginal(capsys):
    code, _, err = run(["gen", "pr-box", "--pa", "1/2,1/2,1/2"], capsys)
    assert code == 1 and "error" in err


def test_gen_swap_and_model(tmp_path, capsys):
    assert run(["gen", "swap", "--dim", "3", "--basis", "fourier", "--out", tmp_path / "s.json"], capsys)[0] == 0
    assert run(["gen", "model", "pr-model", "--out", tmp_path / "m.json"], capsys)[0] == 0


@pytest.mark.parametrize("argv,expected", [
    (["dsep", "--dag", "evans", "--x", "A", "--y", "C"], False),
    (["dsep", "--dag", "evans", "--x", "A", "--y", "C", "--z", "B"], False),
    (["esep", "--dag", "evans", "--x", "A", "--y", "C", "--delete", "B"], True),
])
def test_separation_queries(argv, expected, capsys):
    code, text, _ = run(argv + ["--format", "json"], capsys)
    assert code == 0 and json.loads(text)["results"]["separated"] is expected


def test_check_gpt_writes_valid_certificate(tmp_path, capsys):
    path = write_gpt_point(tmp_path)
    code, text, _ = run(["check", "gpt", path], capsys)
    assert code == 2 and "Infeasible" in text
    cert = FarkasCertificate.from_json(json.loads((tmp_path / "g.gpt.cert.json").read_text()))
    from evanscompat import gpt
    p = JointDistribution.from_json(json.loads(path.read_text()))
    assert lpmod.validate_certificate(gpt.build_gpt_lp(p).lp, cert)


def test_check_inflation_order1_feasible(tmp_path, capsys):
    code, _, _ = run(["check", "inflation", write_gpt_point(tmp_path), "--order", "1"], capsys)
    assert code == 0


def test_malformed_json_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"variables": [\n  oops]}')
    code, _, err = run(["check", "gpt", bad], capsys)
    assert code == 1 and "line 2" in err


def test_missing_file_and_unknown_command(tmp_path, capsys):
    assert run(["check", "gpt", tmp_path / "none.json"], capsys)[0] == 1
    assert run(["frobnicate"], capsys)[0] == 1


def test_export_lp(tmp_path, capsys):
    out, meta = tmp_path / "g.lp", tmp_path / "g.meta.json"
    code, _, _ = run(["export", "lp", write_gpt_point(tmp_path), "--kind", "inflation", "--order", "1",
                      "--out", out, "--meta", meta], capsys)
    assert code == 0 and out.read_text().startswith("Minimize")
    assert json.loads(meta.read_text())["n_columns"] == 16


def test_witness_preset_eval(tmp_path, capsys):
    code, text, _ = run(["witness", "preset", "gpt_topology", "--eval", write_gpt_point(tmp_path),
                         "--format", "json"], capsys)
    assert code == 0
    assert "3/2" in text


def test_report_digest_is_stable(tmp_path, capsys):
    path = write_gpt_point(tmp_path)
    digests = []
    for k in range(2):
        rep = tmp_path / f"r{k}.json"
        run(["check", "gpt", path, "--report", rep, "--cert", tmp_path / "c.json"], capsys)
        digests.append(json.loads(rep.read_text())["inputs_digest"])
    assert digests[0] == digests[1]


def test_reproduce_subset(capsys):
    code, text, err = run(["reproduce", "all", "--only", "1,2"], capsys)
    assert code == 0 and "reproduce all: ok" in text
    assert "[PASS] criterion 1" in err and "[PASS] criterion 2" in err


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "evanscompat.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()


def test_reproduce_output_is_byte_identical(tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        assert run(["reproduce", "all", "--only", "1,2,6", "--out", path], capsys)[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert b"wall_time" not in outs[0]


def test_visibility_classical_pr_box(tmp_path, capsys):
    pr = tmp_path / "pr.json"
    run(["gen", "pr-box", "--pa", "10/21,1/21,10/21", "--out", pr], capsys)
    code, text, _ = run(["visibility", "classical", pr, "--format", "json"], capsys)
    assert code == 0
    res = json.loads(text)["results"]
    assert 0.82 <= res["visibility"] and res["upper"] <= 0.86

import json
import math
from pathlib import Path

import pytest

from dinisrb import cli
from dinisrb.errors import ConvergenceError, ValidationError
from dinisrb.experiments import REGISTRY, list_experiments, resolve_config, run

SMALL = {
    "splitting": {},
    "rpf": {"potential": {"kind": "bernoulli", "p": 0.3}},
    "volume-lemma": {"ns": [2, 3, 4], "samples": 5000},
    "basin": {"n_points": 10, "n_iters": 500},
    "horseshoe-build": {"depth": 6, "csv_depth": 3},
    "dini-certificate": {"depth": 10, "N": 2000},
    "pressure": {"grid": 40, "n_list": [1, 2, 3], "eps_list": [0.1]},
    "lemma-verify": {"lemma": 2, "options": {"n_samples": 50}},
    "gibbs-vs-birkhoff": {"n_points": 10, "n_iters": 300},
}


def test_catalog():
    cat = list_experiments()
    names = {e["name"] for e in cat}
    assert len(cat) >= 10
    assert {"attractor-criterion", "dini-certificate", "rpf", "basin"} <= names
    for e in cat:
        assert e["description"] and e["statement"]
    att = next(e for e in cat if e["name"] == "attractor-criterion")
    assert "pressure" in att["statement"] and "attractor" in att["statement"]


def test_rpf_full_two_shift_pressure():
    rep = run({"experiment": "rpf", "system": "full-shift", "parameters": {"potential": {"kind": "zero"}}},
              write=False)
    assert rep.summary["pressure"] == pytest.approx(math.log(2), abs=1e-10)


def test_invalid_experiment_writes_nothing(tmp_path):
    out = tmp_path / "o"
    with pytest.raises(ValidationError):
        run({"experiment": "no-such-thing", "output_dir": str(out)})
    assert not out.exists()


def test_unknown_keys_rejected():
    with pytest.raises(ValidationError):
        resolve_config({"experiment": "rpf", "colour": "red"})
    with pytest.raises(ValidationError):
        resolve_config({"experiment": "rpf", "parameters": {"tolerance": 1}})
    with pytest.raises(ValidationError):
        resolve_config({"experiment": "rpf", "seed": -1})
    with pytest.raises(ValidationError):
        resolve_config({"experiment": "lemma-verify", "parameters": {}})


def test_manifest_echoes_resolved_config(tmp_path):
    rep = run({"experiment": "horseshoe-build", "parameters": {"depth": 4}, "output_dir": str(tmp_path)})
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["parameters"]["depth"] == 4 and man["parameters"]["n_terms"] == 100000
    assert man == rep.manifest
    assert (tmp_path / "tree_I.csv").read_text().splitlines()[0] == "word,left,right,gap_left,gap_right"


@pytest.mark.parametrize("name", sorted(SMALL))
def test_manifest_rerun_bit_identical(tmp_path, name):
    a = tmp_path / "a"
    run({"experiment": name, "parameters": SMALL[name], "seed": 3, "output_dir": str(a)})
    man = json.loads((a / "manifest.json").read_text())
    b = tmp_path / "b"
    man["output_dir"] = str(b)
    run(man)
    files = sorted(p.name for p in a.iterdir() if p.name not in ("timing.json", "manifest.json"))
    assert "summary.json" in files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_order_independence():
    x = {"experiment": "basin", "parameters": SMALL["basin"]}
    y = {"experiment": "volume-lemma", "parameters": SMALL["volume-lemma"]}
    s1 = [run(x, write=False).summary, run(y, write=False).summary]
    s2 = [run(y, write=False).summary, run(x, write=False).summary]
    assert s1[0] == s2[1] and s1[1] == s2[0]


def test_basin_example_via_runner():
    rep = run({"experiment": "basin", "system": "cat-map",
               "parameters": {"g": "cos1", "n_points": 100, "n_iters": 100000, "tolerance": 0.05}},
              write=False)
    assert rep.summary["fraction_converged"] >= 0.95


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("DINISRB_OUTPUT_DIR", str(tmp_path))
    rep = run({"experiment": "dini-certificate", "parameters": {"depth": 5, "N": 500}})
    assert Path(rep.output_dir) == tmp_path / "dini-certificate"
    assert (tmp_path / "dini-certificate" / "certificate.csv").exists()


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    assert cli.main(["list"]) == 0
    assert cli.main(["rpf", "--system", "golden-mean-shift", "--no-write"]) == 0
    assert cli.main(["basin", "--set", "n_points=3", "--no-write"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", "--config", str(bad)]) == 2

    def boom(cfg, P):
        raise ConvergenceError("stuck", residual=1.0)

    monkeypatch.setattr(REGISTRY["splitting"], "func", boom)
    assert cli.main(["splitting", "--no-write"]) == 3


def test_cli_summary_output(capsys):
    assert cli.main(["rpf", "--system", "golden-mean-shift", "--no-write"]) == 0
    js = json.loads(capsys.readouterr().out)
    assert js["summary"]["eigenvalue"] == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-10)


def test_cli_flags_map_to_parameters(tmp_path):
    assert cli.main(["pressure", "--grid", "30", "--eps", "0.1", "--n", "1", "2",
                     "--output-dir", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["parameters"]["grid"] == 30 and man["parameters"]["n_list"] == [1, 2]
    rows = (tmp_path / "pressure.csv").read_text().splitlines()
    assert rows[0] == "n,epsilon,estimate,stderr,size,saturated" and len(rows) == 3


def test_cli_run_from_manifest(tmp_path):
    a = tmp_path / "a"
    assert cli.main(["verify-lemma", "1", "--samples", "100", "--output-dir", str(a)]) == 0
    b = tmp_path / "b"
    assert cli.main(["run", "--config", str(a / "manifest.json"), "--output-dir", str(b), "--deterministic"]) == 0
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()

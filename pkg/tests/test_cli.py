import json
import os
import subprocess
import sys

import pytest

from lgc_lab import ConfigError
from lgc_lab import cli

ORACLE = os.path.join(os.path.dirname(__file__), "oracles", "incidence_oracle.py")


def write(path, text):
    path.write_text(text)
    return str(path)


def csv_bytes(out):
    return {name: open(os.path.join(out, name), "rb").read()
            for name in sorted(os.listdir(out)) if name.endswith(".csv")}


def test_parse_and_validate():
    raw, errors = cli.read_config_text("experiment = vdc  # comment\nlams = 16, 64\nseed=3\n")
    cfg = cli.validate_config(raw, errors)
    assert cfg["lams"] == [16.0, 64.0] and cfg["seed"] == 3 and cfg["family"] == "linear"


def test_validation_lists_every_field():
    raw, errors = cli.read_config_text("experiment=incidence\nms=1,20\nmethod=slow\nbogus=1\ncount=x\nseed=1\nseed=2\n")
    with pytest.raises(ConfigError) as info:
        cli.validate_config(raw, errors)
    msg = str(info.value)
    for part in ("duplicate key 'seed'", "bogus: unknown key", "ms: grid exponents", "method:", "count:"):
        assert part in msg


def test_gabor_lambda_floor():
    raw, errors = cli.read_config_text("experiment=phys-local\nlams=64,256\n")
    with pytest.raises(ConfigError, match="lambda > 100"):
        cli.validate_config(raw, errors)
    with pytest.raises(ConfigError, match="required key missing"):
        cli.validate_config({"experiment": "kernel-l1"})
    with pytest.raises(ConfigError, match="unknown value"):
        cli.validate_config({"experiment": "nope"})


def test_main_exit_codes(tmp_path, capsys):
    bad = write(tmp_path / "bad.cfg", "experiment=vdc\nfamily=cubic\n")
    assert cli.main(["validate", bad]) == 2
    assert "family" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == 2
    good = write(tmp_path / "good.cfg", f"experiment=vdc\nlams=16\nout={tmp_path / 'o'}\n")
    assert cli.main(["validate", good]) == 0
    assert cli.main(["oracle", "kernel-l1", good]) == 2


def test_vdc_single_row_run(tmp_path, capsys):
    cfg = write(tmp_path / "v.cfg", f"experiment=vdc\nlams=256\nout={tmp_path / 'o'}\n")
    assert cli.main(["run", cfg]) == 0
    summary = capsys.readouterr().out.strip().splitlines()[-1]
    assert summary.startswith("vdc, ") and summary.endswith("1/1")
    lines = open(tmp_path / "o" / "vdc.csv").read().splitlines()
    assert lines[0] == "l1_coeff_norm,estimate,bound,pass" and len(lines) == 2
    assert lines[1].split(",")[-1] == "1"


def test_manifest_contents(tmp_path):
    cfg = cli.validate_config({"experiment": "symbol-decay", "j3s": "6,7,8", "out": str(tmp_path / "s")})
    status, outcome, out = cli.run(cfg, workers=1, log=lambda s: None)
    assert status == 0
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert man["status"] == "complete"
    assert man["config"]["j3s"] == [6, 7, 8]
    for key in ("incidence_rounding", "incidence_wrap", "modelform_shift", "modelform_epsilon_default", "gabor_tau_drop"):
        assert key in man["conventions"]
    for name, digest in man["outputs"].items():
        assert cli.sha256(os.path.join(out, name)) == digest
    assert man["summary"].startswith("symbol-decay, ")


def test_flag_threshold_exit(tmp_path):
    # three kernel points with a tiny MC count: error bars exceed half the estimate
    cfg = cli.validate_config({"experiment": "kernel-l1", "lams": "4096,8192,16384", "sampler": "mc",
                               "count": "200", "flag_threshold": "0", "out": str(tmp_path / "k")})
    status, _, out = cli.run(cfg, workers=1, log=lambda s: None)
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert status == 3 and len(man["flags"]) == 3


def test_decay_theorem_byte_identical(tmp_path):
    texts = []
    for run in ("a", "b"):
        cfg = cli.validate_config({"experiment": "decay-theorem", "lams": "256,512,1024",
                                   "presets": "locked,random-sign", "seed": "5", "out": str(tmp_path / run)})
        cli.run(cfg, workers=1, log=lambda s: None)
        texts.append(csv_bytes(tmp_path / run))
    assert texts[0] == texts[1] and texts[0]


@pytest.mark.parametrize("experiment,params", [
    ("incidence", {"ms": "6,7", "count": "60"}),
    ("vdc", {"family": "random", "count": "30"}),
    ("symbol-decay", {"j3s": "6,7,8,9"}),
])
def test_worker_count_determinism(tmp_path, experiment, params):
    outs = []
    for workers in (1, 4):
        cfg = cli.validate_config({"experiment": experiment, **params, "out": str(tmp_path / f"w{workers}")})
        cli.run(cfg, workers=workers, log=lambda s: None)
        outs.append(csv_bytes(tmp_path / f"w{workers}"))
    assert outs[0] == outs[1]


def test_incidence_against_oracle_script(tmp_path):
    cfg = cli.validate_config({"experiment": "incidence", "ms": "6,7,8", "count": "4",
                               "write_instances": "1", "out": str(tmp_path / "i")})
    status, outcome, out = cli.run(cfg, workers=1, log=lambda s: None)
    assert status == 0
    inst_dir = os.path.join(out, "instances")
    files = sorted(os.path.join(inst_dir, f) for f in os.listdir(inst_dir))
    assert len(files) == 12
    res = subprocess.run([sys.executable, ORACLE, *files], capture_output=True, text=True, check=True)
    oracle_counts = [int(line.split()[-1]) for line in res.stdout.splitlines()]
    rows = outcome.tables["incidence.csv"].rows
    assert [int(r[3]) for r in rows] == oracle_counts
    for path in files[:2]:
        assert cli.oracle("incidence", path, log=lambda s: None) == 0


def test_modelform_oracle_subcommand(tmp_path):
    cfg = write(tmp_path / "mf.cfg", "experiment=modelform-dichotomy\nlams=144\n")
    assert cli.oracle("modelform-dichotomy", cfg, log=lambda s: None) == 0


def test_console_script_installed(tmp_path):
    cfg = write(tmp_path / "v.cfg", "experiment=vdc\n")
    res = subprocess.run(["lgc", "validate", cfg], capture_output=True, text=True)
    assert res.returncode == 0 and "ok: vdc" in res.stdout

import json
import subprocess
import sys

import pytest

from mvae.cli import main
from mvae.experiment import RESULT_FIELDS, load_results

SMALL = {
    "data": {"kind": "mixture", "n_per_class": 20, "separation": 2.5, "std": 1.0},
    "per_class": 3, "train": {"epochs": 1, "batch_size": 20}, "seeds": [0], "eval_n_mc": 2,
}


@pytest.fixture
def config(tmp_path):
    def write(**kw):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({**SMALL, **kw}))
        return path
    return write


def test_sweep_writes_results(config, tmp_path):
    out = tmp_path / "out"
    code = main(["sweep", "--config", str(config(sweep={"p0": 0.2, "p1": [0.1, 0.3]})),
                 "--out", str(out), "--seed", "0", "--seed", "4"])
    assert code == 0
    rows = load_results(out / "results.csv")
    assert len(rows) == 8
    assert (out / "results.csv").read_text().splitlines()[0] == ",".join(RESULT_FIELDS)


def test_run_json(config, tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--config", str(config(flip=[0.2, 0.4])), "--out", str(out),
                 "--objective", "m1m2", "--alpha", "0.5", "--psi-mode", "literal",
                 "--format", "json"])
    assert code == 0
    (row,) = load_results(out / "results.json")
    assert row.objective == "m1m2" and row.alpha == 0.5


def test_run_to_stdout(config, capsys):
    assert main(["run", "--config", str(config(flip=[0.1, 0.1]))]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(RESULT_FIELDS) and len(lines) == 2


def test_eval(config, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--config", str(config(flip=[0.2, 0.4])), "--out", str(out)])
    capsys.readouterr()
    run_dir = next(p for p in out.iterdir() if p.is_dir())
    assert main(["eval", str(run_dir)]) == 0
    assert 0.0 <= json.loads(capsys.readouterr().out)["accuracy"] <= 1.0


def test_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    assert "nope.json" in capsys.readouterr().err


def test_run_without_flip(config, capsys):
    assert main(["run", "--config", str(config(sweep={"p0": 0.2, "p1": [0.1]}))]) == 2
    assert "flip" in capsys.readouterr().err


def test_failed_cells_exit_nonzero(config, tmp_path, capsys):
    code = main(["sweep", "--config", str(config(sweep={"p0": 1.0, "p1": [0.0]})),
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "DataError" in capsys.readouterr().err


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_module_entry_point(config):
    proc = subprocess.run([sys.executable, "-m", "mvae", "run", "--config",
                           str(config(flip=[0.2, 0.2]))], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("p0,p1,seed")

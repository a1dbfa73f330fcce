import csv
import io
import subprocess
import sys

import pytest

from effattack.harness.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, OUT_DIR_ENV, main

SMALL = """\
id: cli-small
model: {behavior: D1, in_dim: 8, widths: [4, 4]}
dataset: {kind: gauss-blobs, n: 40}
training: {epochs: 2}
attack: {name: pgd, epsilon: [0.1, 0.2], steps: 5}
eval_size: 3
"""


@pytest.fixture
def small(tmp_path):
    f = tmp_path / "small.yaml"
    f.write_text(SMALL)
    return f


class TestValidate:
    def test_ok(self, small, capsys):
        assert main(["validate", str(small)]) == EXIT_OK
        assert capsys.readouterr().out.strip() == "ok: cli-small (D1, 2 campaign(s))"

    def test_invalid(self, tmp_path, capsys):
        f = tmp_path / "bad.yaml"
        f.write_text(SMALL.replace("epsilon: [0.1, 0.2]", "epsilon: -1"))
        assert main(["validate", str(f)]) == EXIT_INVALID
        assert "attack.epsilon" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.yaml")]) == EXIT_RUNTIME


class TestRun:
    def test_writes_csv(self, small, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", str(small), "--out", str(out)]) == EXIT_OK
        path = out / "cli-small.csv"
        assert capsys.readouterr().out.strip() == str(path)
        rows = list(csv.DictReader(io.StringIO(path.read_text())))
        assert [r["epsilon"] for r in rows] == ["0.1", "0.2"]

    def test_env_out_dir(self, small, tmp_path, monkeypatch):
        monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
        assert main(["run", str(small), "--format", "json"]) == EXIT_OK
        assert (tmp_path / "env" / "cli-small.json").exists()

    def test_seed_override_changes_output(self, small, tmp_path):
        main(["run", str(small), "--out", str(tmp_path / "a")])
        main(["run", str(small), "--out", str(tmp_path / "b"), "--seed", "9"])
        assert (tmp_path / "a" / "cli-small.csv").read_text() != (tmp_path / "b" / "cli-small.csv").read_text()

    def test_invalid_scenario_exit(self, tmp_path):
        f = tmp_path / "bad.yaml"
        f.write_text("model: {behavior: D9}\n")
        assert main(["run", str(f), "--out", str(tmp_path)]) == EXIT_INVALID

    def test_unwritable_output(self, small, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["run", str(small), "--out", str(blocker / "sub")]) == EXIT_RUNTIME


class TestReportMerge:
    def test_merge_to_file(self, small, tmp_path):
        main(["run", str(small), "--out", str(tmp_path / "a")])
        main(["run", str(small), "--out", str(tmp_path / "b"), "--format", "json"])
        merged = tmp_path / "merged.csv"
        code = main(["report", "merge", str(tmp_path / "a" / "cli-small.csv"),
                     str(tmp_path / "b" / "cli-small.json"), "--out", str(merged)])
        assert code == EXIT_OK
        assert len(list(csv.DictReader(io.StringIO(merged.read_text())))) == 4

    def test_merge_missing(self, tmp_path):
        assert main(["report", "merge", str(tmp_path / "none.csv")]) == EXIT_RUNTIME


class TestSelftest:
    def test_passes(self):
        assert main(["selftest"]) == EXIT_OK

    def test_module_entry(self, small):
        proc = subprocess.run([sys.executable, "-m", "effattack.harness.cli", "validate", str(small)],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout.startswith("ok: cli-small")

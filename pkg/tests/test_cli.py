"""CLI tests: round-trip parity with the library, exit codes, config
parsing, manifests, and byte-identical reruns of seeded experiments."""

import csv
import subprocess
import sys

import numpy as np
import pytest

from postsel.cli import main
from postsel.estimators import estimate_selected
from postsel.selection import select_topk


def write_input(path, y, mu=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if mu is None:
            w.writerow(["y"])
            w.writerows([[repr(float(v))] for v in y])
        else:
            w.writerow(["y", "mu"])
            w.writerows([[repr(float(a)), repr(float(b))]
                         for a, b in zip(y, mu)])


def read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


@pytest.fixture
def sample(tmp_path):
    rng = np.random.default_rng(42)
    y = rng.normal(size=40)
    y[:4] += 6.0
    p = tmp_path / "in.csv"
    write_input(p, y)
    return p, y


class TestSelect:
    def test_topk_output_and_manifest(self, sample, tmp_path):
        p, y = sample
        out = tmp_path / "sel.csv"
        rc = main(["select", str(p), "--procedure", "topk", "--k", "5",
                   "-o", str(out)])
        assert rc == 0
        rows = read_rows(out)
        assert len(rows) == 40
        assert sum(int(r["selected"]) for r in rows) == 5
        o = select_topk(y, 5)
        chosen = {int(r["index"]) for r in rows if r["selected"] == "1"}
        assert chosen == set(o.selected.tolist())
        man = (str(out) + ".manifest")
        text = open(man).read()
        assert "command=select" in text
        assert "procedure=topk" in text
        assert "output=" in text

    def test_y_roundtrips_exactly(self, sample, tmp_path):
        p, y = sample
        out = tmp_path / "sel.csv"
        main(["select", str(p), "--procedure", "bh", "--q", "0.1",
              "-o", str(out)])
        rows = read_rows(out)
        got = np.array([float(r["y"]) for r in rows])
        np.testing.assert_array_equal(got, y)

    def test_tie_at_boundary_exits_3(self, tmp_path):
        p = tmp_path / "tie.csv"
        write_input(p, [3.0, -3.0, 1.0])
        rc = main(["select", str(p), "--procedure", "topk", "--k", "1",
                   "-o", str(tmp_path / "o.csv")])
        assert rc == 3

    def test_missing_k_exits_2(self, sample, tmp_path):
        p, _ = sample
        rc = main(["select", str(p), "--procedure", "topk",
                   "-o", str(tmp_path / "o.csv")])
        assert rc == 2


class TestEstimate:
    def test_parity_with_library(self, sample, tmp_path):
        p, y = sample
        out = tmp_path / "est.csv"
        rc = main(["estimate", str(p), "--procedure", "topk", "--k", "6",
                   "--methods", "tn,ht,st", "-o", str(out)])
        assert rc == 0
        rows = read_rows(out)
        o = select_topk(y, 6)
        rep = estimate_selected(o, y, "tn")
        got = np.array([float(r["tn"]) for r in rows])
        np.testing.assert_array_equal(got, rep.estimates)
        ht = np.array([float(r["ht"]) for r in rows])
        np.testing.assert_array_equal(ht, y[o.selected])
        resid = np.array([float(r["tn_residual"]) for r in rows])
        assert resid.max() < 1e-8

    def test_bootstrap_requires_seed(self, sample, tmp_path):
        p, _ = sample
        args = ["estimate", str(p), "--procedure", "topk", "--k", "4",
                "--methods", "boot1", "-o", str(tmp_path / "o.csv")]
        assert main(args) == 2
        assert main(args + ["--seed", "1"]) == 0

    def test_unknown_method_exits_2(self, sample, tmp_path):
        p, _ = sample
        rc = main(["estimate", str(p), "--procedure", "topk", "--k", "4",
                   "--methods", "tn,bogus", "-o", str(tmp_path / "o.csv")])
        assert rc == 2


class TestCi:
    def test_tn_and_by_columns(self, sample, tmp_path):
        p, y = sample
        out = tmp_path / "ci.csv"
        rc = main(["ci", str(p), "--procedure", "topk", "--k", "4",
                   "--methods", "tn,by", "--level", "0.1", "-o", str(out)])
        assert rc == 0
        rows = read_rows(out)
        assert len(rows) == 4
        for r in rows:
            lo, hi = float(r["tn_lower"]), float(r["tn_upper"])
            assert lo < hi
            assert r["tn_valid"] == "1" and r["by_valid"] == "1"
            assert float(r["by_lower"]) < float(r["by_upper"])

    def test_bad_level_exits_2(self, sample, tmp_path):
        p, _ = sample
        rc = main(["ci", str(p), "--procedure", "topk", "--k", "4",
                   "--level", "1.5", "-o", str(tmp_path / "o.csv")])
        assert rc == 2

    def test_all_methods_failing_exits_4(self, tmp_path, capsys):
        # an efron-only request on a sample far too small to fit
        p = tmp_path / "small.csv"
        write_input(p, np.linspace(-2, 6, 12))
        rc = main(["ci", str(p), "--procedure", "fixed", "--lambda", "1.0",
                   "--methods", "efron", "-o", str(tmp_path / "o.csv")])
        assert rc == 4


class TestInputValidation:
    def test_missing_y_column(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x\n1.0\n")
        rc = main(["select", str(p), "--procedure", "topk", "--k", "1",
                   "-o", str(tmp_path / "o.csv")])
        assert rc == 2

    def test_malformed_row_reports_line(self, tmp_path, capsys):
        p = tmp_path / "bad.csv"
        p.write_text("y\n1.0\nnot-a-number\n")
        rc = main(["select", str(p), "--procedure", "topk", "--k", "1",
                   "-o", str(tmp_path / "o.csv")])
        assert rc == 2
        assert "line 3" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        rc = main(["select", str(tmp_path / "nope.csv"), "--procedure",
                   "topk", "--k", "1", "-o", str(tmp_path / "o.csv")])
        assert rc == 2

    def test_bad_subcommand_exits_2(self):
        assert main(["frobnicate"]) == 2


class TestSimulate:
    def test_seed_required_except_squeeze(self, tmp_path):
        rc = main(["simulate", "winners-curse",
                   "-o", str(tmp_path / "w")])
        assert rc == 2

    def test_squeeze_runs_without_seed(self, tmp_path):
        cfg = tmp_path / "cfg"
        cfg.write_text("y_points=40\nt_points=30\n")
        out = tmp_path / "sq"
        rc = main(["simulate", "squeeze", "--config", str(cfg),
                   "-o", str(out)])
        assert rc == 0
        rows = read_rows(out / "squeeze.csv")
        assert rows[0]["violations"] == "0"

    def test_byte_identical_reruns(self, tmp_path):
        cfg = tmp_path / "cfg"
        cfg.write_text("n=30\ns=50\n")
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            rc = main(["simulate", "winners-curse", "--config", str(cfg),
                       "--seed", "7", "--threads", "2", "-o", str(d)])
            assert rc == 0
        ca = (a / "winners-curse.csv").read_bytes()
        cb = (b / "winners-curse.csv").read_bytes()
        assert ca == cb

    def test_different_seed_changes_output(self, tmp_path):
        cfg = tmp_path / "cfg"
        cfg.write_text("n=30\ns=50\n")
        a, b = tmp_path / "a", tmp_path / "b"
        main(["simulate", "winners-curse", "--config", str(cfg),
              "--seed", "7", "-o", str(a)])
        main(["simulate", "winners-curse", "--config", str(cfg),
              "--seed", "8", "-o", str(b)])
        assert ((a / "winners-curse.csv").read_bytes()
                != (b / "winners-curse.csv").read_bytes())

    def test_unknown_config_key_named_in_error(self, tmp_path, capsys):
        cfg = tmp_path / "cfg"
        cfg.write_text("bogus_key=1\n")
        rc = main(["simulate", "winners-curse", "--config", str(cfg),
                   "--seed", "1", "-o", str(tmp_path / "o")])
        assert rc == 2
        assert "bogus_key" in capsys.readouterr().err

    def test_risk_requires_eta_n(self, tmp_path):
        rc = main(["simulate", "risk", "--seed", "1",
                   "-o", str(tmp_path / "o")])
        assert rc == 2

    def test_insufficient_pivot_data_exits_4(self, tmp_path):
        cfg = tmp_path / "cfg"
        cfg.write_text("n=100\ns=1\nk=5\n")
        rc = main(["simulate", "pivot", "--config", str(cfg),
                   "--seed", "1", "-o", str(tmp_path / "o")])
        assert rc == 4

    def test_manifest_lists_config_and_seed(self, tmp_path):
        cfg = tmp_path / "cfg"
        cfg.write_text("n=20\ns=10\n")
        out = tmp_path / "w"
        main(["simulate", "winners-curse", "--config", str(cfg),
              "--seed", "3", "-o", str(out)])
        text = (out / "winners-curse.csv.manifest").read_text()
        assert "command=simulate" in text
        assert "seed=3" in text
        assert "n=20" in text
        assert "timestamp=" in text


class TestConsoleScript:
    def test_entry_point_runs(self, sample, tmp_path):
        p, _ = sample
        out = tmp_path / "sel.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "postsel.cli", "select", str(p),
             "--procedure", "topk", "--k", "3", "-o", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert out.exists()

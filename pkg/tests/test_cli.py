import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from phylocoal.cli import main


def run(args):
    return main(list(args))


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def simulate_small(workdir, seed="3", n="8", extra=()):
    code = run([
        "simulate", "--trajectory", "constant", "--n", n, "--seed", seed,
        "--out", "g.txt", "--truth", "truth.csv", *extra,
    ])
    assert code == 0
    return workdir / "g.txt"


def infer_small(workdir, out="trace.csv", extra=()):
    code = run([
        "infer", "g.txt", "--sampler", "splithmc", "--grid-points", "6",
        "--iters", "400", "--burnin", "100", "--seed", "5",
        "--clock", "iteration", "--out", out, *extra,
    ])
    assert code == 0


class TestSimulate:
    def test_writes_genealogy_and_truth(self, workdir, capsys):
        simulate_small(workdir)
        assert (workdir / "g.txt").exists()
        lines = (workdir / "truth.csv").read_text().splitlines()
        assert lines[0] == "t,Ne"
        t0, ne0 = lines[1].split(",")
        assert float(t0) == 0.0 and float(ne0) == 1.0
        out = capsys.readouterr().out.splitlines()
        assert out == ["g.txt", "truth.csv"]

    def test_heterochronous_design(self, workdir):
        code = run([
            "simulate", "--trajectory", "constant", "--design", "0:4,0.5:3",
            "--seed", "1", "--out", "g.txt",
        ])
        assert code == 0
        text = (workdir / "g.txt").read_text()
        assert "0.5:3" in text

    def test_bad_design(self, workdir):
        assert run(["simulate", "--design", "nonsense", "--out", "g.txt"]) == 3

    def test_seed_env_fallback(self, workdir, monkeypatch):
        monkeypatch.setenv("PHYLOCOAL_SEED", "3")
        run(["simulate", "--trajectory", "constant", "--n", "8", "--out", "a.txt"])
        monkeypatch.delenv("PHYLOCOAL_SEED")
        simulate_small(workdir)
        assert (workdir / "a.txt").read_text() == (workdir / "g.txt").read_text()


class TestInfer:
    def test_end_to_end(self, workdir):
        simulate_small(workdir)
        infer_small(workdir)
        header = (workdir / "trace.csv").read_text().splitlines()[0]
        assert header == "iter,accept,loglik,logpost,cpu_s,tau,f_1,f_2,f_3,f_4,f_5"
        meta = dict(
            line.split("=", 1)
            for line in (workdir / "trace.meta").read_text().splitlines()
        )
        assert meta["sampler"] == "splithmc"
        assert meta["grid_points"] == "6"
        assert len(meta["genealogy_sha256"]) == 64

    def test_deterministic_with_iteration_clock(self, workdir):
        simulate_small(workdir)
        infer_small(workdir, out="t1.csv")
        infer_small(workdir, out="t2.csv")
        assert (workdir / "t1.csv").read_bytes() == (workdir / "t2.csv").read_bytes()

    def test_config_file_precedence(self, workdir):
        simulate_small(workdir)
        (workdir / "conf.txt").write_text("grid_points=4\niters=200\nburnin=50\n")
        code = run([
            "infer", "g.txt", "--config", "conf.txt", "--grid-points", "5",
            "--seed", "2", "--clock", "iteration", "--out", "t.csv",
        ])
        assert code == 0
        meta = (workdir / "t.meta").read_text()
        # flag wins over config; config wins over the 15000-iteration default
        assert "grid_points=5" in meta and "iters=200" in meta

    def test_newick_input(self, workdir):
        (workdir / "tree.nwk").write_text("((A:1,B:1):1,C:2);")
        code = run([
            "infer", "tree.nwk", "--newick", "--grid-points", "4",
            "--iters", "50", "--burnin", "10", "--seed", "1", "--out", "t.csv",
        ])
        assert code == 0

    def test_dump_stats(self, workdir):
        simulate_small(workdir)
        infer_small(workdir, extra=("--dump-stats", "stats.csv"))
        lines = (workdir / "stats.csv").read_text().splitlines()
        assert lines[0].startswith("cell,")

    def test_missing_file_is_io_error(self, workdir):
        assert run(["infer", "absent.txt", "--iters", "10"]) == 5

    def test_unreadable_genealogy_is_data_error(self, workdir):
        (workdir / "bad.txt").write_text("not a genealogy\n")
        assert run(["infer", "bad.txt", "--iters", "10"]) == 3

    def test_bad_config_value(self, workdir):
        simulate_small(workdir)
        (workdir / "conf.txt").write_text("iters=ten\n")
        assert run(["infer", "g.txt", "--config", "conf.txt"]) == 3


class TestDiagnoseAndSummarize:
    def test_diagnose_table_and_csv(self, workdir, capsys):
        simulate_small(workdir)
        infer_small(workdir)
        code = run(["diagnose", "trace.csv", "--csv", "eff.csv"])
        assert code == 0
        out = capsys.readouterr().out
        assert "minESS(f)/s" in out and "splithmc" in out
        lines = (workdir / "eff.csv").read_text().splitlines()
        assert lines[0] == "method,AP,s_iter,minESS_f_per_s,spdup_f,ESS_tau_per_s,spdup_tau"
        assert lines[1].startswith("splithmc,")

    def test_summarize_with_truth_and_svg(self, workdir, capsys):
        simulate_small(workdir)
        infer_small(workdir)
        code = run([
            "summarize", "trace.csv", "--truth", "truth.csv",
            "--out", "summary.csv", "--svg", "band.svg",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "coverage=" in out
        lines = (workdir / "summary.csv").read_text().splitlines()
        assert lines[0] == "t,med,lo,hi,truth"
        assert len(lines) == 6  # 5 cells + header
        root = ET.parse(workdir / "band.svg").getroot()
        assert root.tag.endswith("svg")

    def test_summarize_grid_mismatch(self, workdir):
        simulate_small(workdir)
        infer_small(workdir)
        meta = (workdir / "trace.meta").read_text().replace(
            "grid_points=6", "grid_points=9"
        )
        (workdir / "trace.meta").write_text(meta)
        assert run(["summarize", "trace.csv", "--out", "s.csv"]) == 3

    def test_summarize_missing_trace(self, workdir):
        assert run(["summarize", "none.csv", "--out", "s.csv"]) == 5

import numpy as np
import pytest

from cpaprkit import (
    SolverOptions,
    cp_apr_mu,
    load_model,
    random_count_tensor,
    save_tns,
)
from cpaprkit import cli


def run_cli(args):
    return cli.main(list(args))


@pytest.fixture
def tns_file(tmp_path):
    t = random_count_tensor((6, 5, 4), 60, seed=11)
    path = tmp_path / "t.tns"
    save_tns(t, path)
    return path


class TestDecompose:
    def test_happy_path_files_written(self, tmp_path, tns_file, capsys):
        trace_csv = tmp_path / "trace.csv"
        model_txt = tmp_path / "model.txt"
        breakdown_csv = tmp_path / "bd.csv"
        code = run_cli([
            "decompose", "--input", str(tns_file), "--rank", "2",
            "--max-outer", "3", "--backend", "numpy",
            "--out", str(trace_csv), "--model-out", str(model_txt),
            "--breakdown", str(breakdown_csv),
        ])
        assert code == 0
        err = capsys.readouterr().err
        assert "outer sweeps" in err
        model = load_model(model_txt)
        assert model.rank == 2
        lines = trace_csv.read_text().strip().split("\n")
        assert lines[0] == "outer,mode,inner,phi_ms,objective,kkt"
        assert len(lines) > 1
        bd = breakdown_csv.read_text().strip().split("\n")
        assert bd[0] == "kernel,seconds,percent"
        shares = [float(line.split(",")[2]) for line in bd[1:]]
        assert abs(sum(shares) - 100.0) < 0.01

    def test_matches_library_path(self, tmp_path, tns_file):
        trace_csv = tmp_path / "trace.csv"
        code = run_cli([
            "decompose", "--input", str(tns_file), "--rank", "2",
            "--max-outer", "3", "--seed", "0", "--backend", "numpy",
            "--out", str(trace_csv), "--model-out", str(tmp_path / "m.txt"),
        ])
        assert code == 0
        from cpaprkit import load_tns

        tensor = load_tns(tns_file)
        opts = SolverOptions(rank=2, max_outer=3, seed=0, backend="numpy")
        model, trace = cp_apr_mu(tensor, opts)
        rows = [
            line.split(",")
            for line in trace_csv.read_text().strip().split("\n")[1:]
        ]
        assert len(rows) == len(trace.events)
        for row, event in zip(rows, trace.events):
            assert (int(row[0]), int(row[1]), int(row[2])) == (
                event.outer, event.mode, event.inner,
            )
            assert float(row[5]) == pytest.approx(event.kkt, rel=1e-5)
        cli_final = float(rows[-1][4])
        assert cli_final == pytest.approx(trace.objectives[-1], rel=1e-11)
        # same options: the saved model must match the library model exactly
        saved = load_model(tmp_path / "m.txt")
        for fa, fb in zip(saved.factors, model.factors):
            assert (fa == fb).all()

    def test_default_model_name(self, tmp_path, tns_file, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = run_cli([
            "decompose", "--input", str(tns_file), "--rank", "2",
            "--max-outer", "1", "--backend", "numpy",
            "--out", str(tmp_path / "trace.csv"),
        ])
        assert code == 0
        assert (tmp_path / "t.model.txt").exists()

    def test_perturbed_tagged_on_stderr(self, tmp_path, tns_file, capsys):
        code = run_cli([
            "decompose", "--input", str(tns_file), "--rank", "2",
            "--max-outer", "1", "--backend", "numpy",
            "--perturbation", "fixed-row",
            "--out", str(tmp_path / "trace.csv"),
            "--model-out", str(tmp_path / "m.txt"),
        ])
        assert code == 0
        assert "PERTURBED" in capsys.readouterr().err


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert run_cli(["decompose", "--frobnicate"]) == 1
        capsys.readouterr()

    def test_missing_subcommand(self, capsys):
        assert run_cli([]) == 1
        capsys.readouterr()

    def test_bad_policy_triple(self, tns_file, capsys):
        code = run_cli([
            "decompose", "--input", str(tns_file), "--rank", "2",
            "--policy", "1,64,32",
        ])
        assert code == 1
        capsys.readouterr()

    def test_missing_input_file(self, tmp_path, capsys):
        code = run_cli([
            "decompose", "--input", str(tmp_path / "absent.tns"), "--rank", "2",
        ])
        assert code == 2
        capsys.readouterr()

    def test_malformed_tensor(self, tmp_path, capsys):
        bad = tmp_path / "bad.tns"
        bad.write_text("1 1 FROG\n")
        code = run_cli(["decompose", "--input", str(bad), "--rank", "2"])
        assert code == 2
        capsys.readouterr()

    def test_malformed_machine_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = run_cli(["roofline", "--machine", str(bad)])
        assert code == 2
        capsys.readouterr()

    def test_internal_failure_is_3(self, tns_file, monkeypatch, capsys):
        def boom(tensor, options):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(cli, "cp_apr_mu", boom)
        code = run_cli([
            "decompose", "--input", str(tns_file), "--rank", "2",
        ])
        assert code == 3
        assert "internal error" in capsys.readouterr().err

    def test_version_exits_zero(self, capsys):
        assert run_cli(["--version"]) == 0
        assert capsys.readouterr().out.strip()


class TestRoofline:
    def test_curve_and_quoted_markers(self, tmp_path):
        out = tmp_path / "roofline.csv"
        code = run_cli([
            "roofline", "--machine", "e5-2690v4", "--rank", "10",
            "--chunk", "32", "--quoted", "--out", str(out),
        ])
        assert code == 0
        text = out.read_text()
        # compute plateau at high intensity equals the exact peak
        plateau = [
            line for line in text.strip().split("\n")
            if line.startswith("curve,") and line.split(",")[2] == "128"
        ]
        assert plateau and plateau[0].split(",")[3] == "1164.8"
        assert "marker,chunked_R10_V32_quoted,0.27,41.472" in text
        assert "marker,atomic_R10," in text

    def test_gnuplot_companion(self, tmp_path):
        out = tmp_path / "r.csv"
        script = tmp_path / "r.gp"
        code = run_cli([
            "roofline", "--machine", "k80", "--out", str(out),
            "--gnuplot", str(script),
        ])
        assert code == 0
        assert str(out) in script.read_text()

    def test_machine_required(self, capsys):
        assert run_cli(["roofline"]) == 1
        capsys.readouterr()


class TestGridsearch:
    def test_skipped_row_in_csv(self, tmp_path):
        out = tmp_path / "grid.csv"
        code = run_cli([
            "gridsearch", "--synth", "6x5x4", "--nnz", "60", "--rank", "2",
            "--policy-league", "1", "--policy-team", "1,64",
            "--policy-vector", "32", "--reps", "1", "--threads", "1",
            "--backend", "numpy", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "league,team,vector,valid,target,mode,mean_ms,speedup"
        assert "1,64,32,0,skipped,-1,nan,nan" in lines

    def test_heatmap_output(self, tmp_path):
        out = tmp_path / "heat.txt"
        code = run_cli([
            "gridsearch", "--synth", "5x4x3", "--nnz", "40", "--rank", "2",
            "--policy-league", "1,2", "--policy-team", "1",
            "--policy-vector", "8", "--reps", "1", "--threads", "1",
            "--backend", "numpy", "--heatmap", "--out", str(out),
        ])
        assert code == 0
        assert out.read_text().startswith("# league 1")


class TestPpaCommand:
    def test_csv_structure(self, tmp_path, tns_file):
        out = tmp_path / "ppa.csv"
        code = run_cli([
            "ppa", "--input", str(tns_file), "--rank", "2", "--reps", "1",
            "--threads", "1", "--backend", "numpy", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "tensor,perturbation,mean_ms,speedup,valid"
        assert sum(1 for l in lines if l.startswith("GEOMEAN,")) == 4
        assert any(l.startswith("t.tns,none,") for l in lines)

    def test_needs_some_tensor(self, capsys):
        assert run_cli(["ppa", "--rank", "2"]) == 2
        capsys.readouterr()


class TestBenchCommands:
    def test_bench_stream(self, tmp_path):
        out = tmp_path / "stream.csv"
        code = run_cli([
            "bench-stream", "--length", "20000", "--reps", "2",
            "--kernels", "copy,triad", "--backend", "numpy",
            "--machine", "k80", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0].endswith(",percent_of_peak")
        assert len(lines) == 3
        for line in lines[1:]:
            assert line.split(",")[6] == "1"

    def test_bench_mttkrp(self, tmp_path):
        out = tmp_path / "mttkrp.csv"
        code = run_cli([
            "bench-mttkrp", "--synth", "10x9x8", "--nnz", "500",
            "--rank", "4", "--reps", "2", "--threads", "1",
            "--backend", "numpy", "--machine", "e5-2690v4",
            "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[1].split(",")[7] == "1"  # validated


class TestConfig:
    def test_config_supplies_defaults(self, tmp_path, tns_file):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("rank=2\nmax_outer=1\nbackend=numpy\n")
        code = run_cli([
            "decompose", "--config", str(cfg), "--input", str(tns_file),
            "--out", str(tmp_path / "trace.csv"),
            "--model-out", str(tmp_path / "m.txt"),
        ])
        assert code == 0
        assert load_model(tmp_path / "m.txt").rank == 2

    def test_explicit_flag_beats_config(self, tmp_path, tns_file):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("rank=2\nmax_outer=1\nbackend=numpy\n")
        code = run_cli([
            "decompose", "--config", str(cfg), "--input", str(tns_file),
            "--rank", "3",
            "--out", str(tmp_path / "trace.csv"),
            "--model-out", str(tmp_path / "m.txt"),
        ])
        assert code == 0
        assert load_model(tmp_path / "m.txt").rank == 3

    def test_config_bool_flag(self, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text("heatmap=true\nreps=1\nthreads=1\nbackend=numpy\n")
        out = tmp_path / "heat.txt"
        code = run_cli([
            "gridsearch", "--config", str(cfg), "--synth", "4x4x4",
            "--nnz", "30", "--rank", "2", "--policy-league", "1",
            "--policy-team", "1", "--policy-vector", "8", "--out", str(out),
        ])
        assert code == 0
        assert out.read_text().startswith("# league")

    def test_bad_config_line_is_usage_error(self, tmp_path, tns_file, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this is not key value\n")
        code = run_cli([
            "decompose", "--config", str(cfg), "--input", str(tns_file),
            "--rank", "2",
        ])
        assert code == 1
        capsys.readouterr()

    def test_missing_config_file(self, tns_file, capsys):
        code = run_cli([
            "decompose", "--config", "/nonexistent.cfg",
            "--input", str(tns_file), "--rank", "2",
        ])
        assert code == 2
        capsys.readouterr()

    def test_comments_and_blanks_ignored(self, tmp_path, tns_file):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# comment\n\nrank=2\nmax-outer=1\nbackend=numpy\n")
        code = run_cli([
            "decompose", "--config", str(cfg), "--input", str(tns_file),
            "--out", str(tmp_path / "trace.csv"),
            "--model-out", str(tmp_path / "m.txt"),
        ])
        assert code == 0


class TestStdout:
    def test_default_output_to_stdout(self, capsys):
        code = run_cli([
            "bench-stream", "--length", "5000", "--reps", "2",
            "--kernels", "copy", "--backend", "numpy",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("kernel,length,")

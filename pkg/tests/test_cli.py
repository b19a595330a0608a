import json
import math
import subprocess
import sys

import pytest

from conftest import ACCEPT_SEED

GATED2 = {
    "base_seed": ACCEPT_SEED,
    "queues": [
        {"arrival_rate": 2.0, "service": {"kind": "exponential", "rate": 3.0},
         "gating": {"kind": "deterministic", "k": 1}},
        {"arrival_rate": 2.0, "service": {"kind": "exponential", "rate": 3.0},
         "gating": {"kind": "deterministic", "k": 1}},
    ],
}

UNDERLOADED = {
    "base_seed": 1,
    "queues": [
        {"arrival_rate": 1.0, "service": {"kind": "exponential", "rate": 3.0},
         "gating": {"kind": "deterministic", "k": 1}},
        {"arrival_rate": 1.0, "service": {"kind": "exponential", "rate": 3.0},
         "gating": {"kind": "deterministic", "k": 1}},
    ],
}


def run_cli(*args, timeout=600):
    return subprocess.run([sys.executable, "-m", "pollingfluid.cli", *args],
                          capture_output=True, text=True, timeout=timeout)


@pytest.fixture(scope="module")
def cfg_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "gated2.json"
    path.write_text(json.dumps(GATED2))
    return str(path)


@pytest.fixture(scope="module")
def reject_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "under.json"
    path.write_text(json.dumps(UNDERLOADED))
    return str(path)


class TestExitCodes:
    def test_validate_accept_exit_zero(self, cfg_path):
        proc = run_cli("validate", "--config", cfg_path, "--deterministic")
        assert proc.returncode == 0
        doc = json.loads(proc.stdout)
        assert doc["verdict"] == "accept"
        assert doc["total_load"] == pytest.approx(4 / 3, rel=1e-12)

    def test_validate_reject_exit_one(self, reject_path):
        proc = run_cli("validate", "--config", reject_path, "--deterministic")
        assert proc.returncode == 1
        doc = json.loads(proc.stdout)
        assert doc["verdict"] == "reject"
        assert "not_overloaded" in doc["reasons"]

    def test_downstream_command_rejects_with_exit_one(self, reject_path):
        proc = run_cli("simulate", "--config", reject_path, "--sessions", "3")
        assert proc.returncode == 1

    def test_missing_config_exit_two(self):
        proc = run_cli("validate", "--config", "/nonexistent/cfg.json")
        assert proc.returncode == 2

    def test_malformed_config_exit_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        proc = run_cli("validate", "--config", str(bad))
        assert proc.returncode == 2

    def test_unknown_flag_exit_four(self, cfg_path):
        proc = run_cli("validate", "--config", cfg_path, "--frobnicate")
        assert proc.returncode == 4

    def test_unknown_subcommand_exit_four(self):
        proc = run_cli("frobnicate")
        assert proc.returncode == 4

    def test_bad_grid_exit_four(self, cfg_path):
        proc = run_cli("fluid", "--config", cfg_path, "--grid", "5:1:10")
        assert proc.returncode == 4


@pytest.fixture(scope="module")
def report(cfg_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("out") / "analysis.json"
    proc = run_cli("analyze", "--config", cfg_path, "--out", str(out),
                   "--reps", "1000", "--pop-cap", "2000", "--deterministic")
    assert proc.returncode == 0, proc.stderr
    return json.loads(out.read_text())


class TestAnalyze:
    def test_report_keys(self, report):
        for key in ("m_check", "gamma", "M", "rho", "u", "v", "q", "q_se",
                    "q_G", "q_G_se", "ambiguity_fraction", "fluid"):
            assert key in report
        for key in ("alpha", "b_bar", "a_bar", "b", "a", "rho"):
            assert key in report["fluid"]

    def test_hand_checked_values(self, report):
        sq7 = math.sqrt(7)
        assert report["rho"] == pytest.approx((8 + 2 * sq7) / 9, abs=1e-9)
        assert report["fluid"]["b_bar"][1] == pytest.approx((1 + sq7) / 3, abs=1e-9)
        assert report["M"][0][0] == pytest.approx(10 / 9, abs=1e-12)

    def test_meta_header(self, report):
        meta = report["meta"]
        assert meta["tool"] == "pollingfluid"
        assert len(meta["config_hash"]) == 64
        assert meta["params"]["reps"] == 1000
        assert "generated_at" not in meta  # suppressed by --deterministic


class TestSimulateCsv:
    def test_trace_format_and_precision(self, cfg_path, tmp_path):
        out = tmp_path / "trace.csv"
        proc = run_cli("simulate", "--config", cfg_path, "--sessions", "10",
                       "--out", str(out), "--deterministic")
        assert proc.returncode == 0, proc.stderr
        lines = out.read_text().strip().split("\n")
        header_rows = [l for l in lines if l.startswith("#")]
        assert any("config_hash=" in l for l in header_rows)
        assert any("params=" in l for l in header_rows)
        body = [l for l in lines if not l.startswith("#")]
        assert body[0] == "session,i,t_i,Q_1,Q_2"
        assert len(body) == 1 + 10 * 3  # I+1 rows per session
        token = body[2].split(",")[2]
        assert token == f"{float(token):.17g}"

    def test_trajectory_artifact_with_grid(self, cfg_path, tmp_path):
        out = tmp_path / "trace.csv"
        proc = run_cli("simulate", "--config", cfg_path, "--grid", "0.5:20:40",
                       "--out", str(out), "--deterministic")
        assert proc.returncode == 0, proc.stderr
        traj = (tmp_path / "trace.csv.traj.csv").read_text().strip().split("\n")
        body = [l for l in traj if not l.startswith("#")]
        assert body[0] == "t,Q_1,Q_2"
        assert len(body) == 41


class TestSampleXi:
    def test_csv_and_summary(self, cfg_path, tmp_path):
        out = tmp_path / "xi.csv"
        proc = run_cli("sample-xi", "--config", cfg_path, "--reps", "200",
                       "--depth", "8", "--out", str(out), "--deterministic")
        assert proc.returncode == 0, proc.stderr
        summary = json.loads(proc.stdout)
        assert summary["count"] == 200
        rho = summary["rho"]
        body = [l for l in out.read_text().strip().split("\n") if not l.startswith("#")]
        assert body[0] == "xi"
        values = [float(x) for x in body[1:]]
        assert len(values) == 200
        assert all(1.0 <= v < rho for v in values)


class TestVerify:
    def test_report_structure(self, cfg_path, tmp_path):
        out = tmp_path / "verify.json"
        proc = run_cli("verify", "--config", cfg_path, "--scales", "4,6",
                       "--reps", "30", "--xi-samples", "150", "--trajectory-reps", "5",
                       "--busy-reps", "2000", "--depth", "8",
                       "--out", str(out), "--deterministic")
        assert proc.returncode == 0, proc.stderr
        doc = json.loads(out.read_text())
        assert {e["n"] for e in doc["ratios"]} == {4, 6}
        for entry in doc["ratios"]:
            for key in ("i", "n", "kind", "median", "iqr", "target"):
                assert key in entry
        assert set(doc["xi"]) >= {"samples_path", "ks", "critical"}
        assert doc["xi"]["samples_path"].endswith(".xi.csv")
        assert len(doc["trajectory"]) == 2
        assert {b["k"] for b in doc["busy"]} == {0, 1, 2, 5, "inf"}
        assert doc["dropped"]["total"] > 0
        xi_csv = (tmp_path / "verify.json.xi.csv").read_text()
        assert xi_csv.startswith("#")


class TestDeterminism:
    @pytest.mark.parametrize("args", [
        ("validate",),
        ("simulate", "--sessions", "8"),
        ("fluid", "--grid", "0.2:5:50:log"),
        ("sample-xi", "--reps", "100", "--depth", "6"),
        ("busy-moments", "--reps", "3000"),
    ])
    def test_byte_identical_reruns(self, cfg_path, tmp_path, args):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{args[0]}-{tag}"
            proc = run_cli(*args, "--config", cfg_path, "--out", str(out), "--deterministic")
            assert proc.returncode == 0, proc.stderr
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_thread_count_does_not_change_results(self, cfg_path, tmp_path):
        # identical MC results for any worker count; only the echoed
        # "threads" parameter in the header may differ
        docs = []
        for tag, threads in (("t1", "1"), ("t3", "3")):
            out = tmp_path / f"busy-{tag}.json"
            proc = run_cli("busy-moments", "--config", cfg_path, "--reps", "4000",
                           "--threads", threads, "--out", str(out), "--deterministic")
            assert proc.returncode == 0, proc.stderr
            doc = json.loads(out.read_text())
            doc["meta"]["params"].pop("threads")
            docs.append(doc)
        assert docs[0] == docs[1]

    def test_timestamp_present_without_flag(self, cfg_path):
        proc = run_cli("validate", "--config", cfg_path)
        assert proc.returncode == 0
        assert "generated_at" in json.loads(proc.stdout)["meta"]

    def test_seed_override_changes_artifacts(self, cfg_path, tmp_path):
        outs = []
        for seed in ("11", "12"):
            out = tmp_path / f"seed-{seed}.csv"
            proc = run_cli("simulate", "--config", cfg_path, "--sessions", "8",
                           "--seed", seed, "--out", str(out), "--deterministic")
            assert proc.returncode == 0
            outs.append(out.read_bytes())
        assert outs[0] != outs[1]

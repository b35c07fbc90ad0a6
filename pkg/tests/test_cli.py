"""Subcommand dispatch, exit codes, report determinism."""

import math
from pathlib import Path

import pytest

from cdsplit.cli import run

MANIFESTS = Path(__file__).resolve().parent.parent / "manifests"

SPLIT_FAST = """
[manifold]
name = fast-split
kind = split
dim = 3

[phi]
expr = sin(r)

[fiber]
type = sphere
einstein_constant = {lam}

[grid]
r_min = -10
r_max = 10
r_count = 101
fiber_count = 3

[cd]
lambda = 0
N = 1

[geodesic]
start = 0.0, 0.4, 0.2
velocity = 1.0, 0.5, -0.3
T = 2.0

[riccati]
a = 1.0
y0 = 0.0
y0p = 0.0
t_max = 2.0

[bochner]
points = 4
"""


def make_split(tmp_path, lam):
    path = tmp_path / "split.cdm"
    path.write_text(SPLIT_FAST.format(lam=lam))
    return path


THRESHOLD = 0.5 * math.exp(-1.0)


class TestExitCodes:
    def test_verify_cd_pass(self, tmp_path):
        man = make_split(tmp_path, THRESHOLD + 0.01)
        assert run("verify-cd", man, tmp_path / "out") == 0
        report = (tmp_path / "out" / "cd_report.txt").read_text()
        assert "passed: True" in report

    def test_verify_cd_fail_prints_witness(self, tmp_path, capsys):
        man = make_split(tmp_path, THRESHOLD - 0.01)
        assert run("verify-cd", man, tmp_path / "out") == 1
        report = (tmp_path / "out" / "cd_report.txt").read_text()
        assert "verdict: fail" in report
        assert "witness:" in report
        out = capsys.readouterr().out
        assert "fail" in out

    def test_parse_error_exit_2(self, tmp_path):
        bad = tmp_path / "bad.cdm"
        bad.write_text("[manifold]\nkind split\n")
        assert run("verify-cd", bad, tmp_path / "out") == 2

    def test_missing_file_exit_2(self, tmp_path):
        assert run("suite", tmp_path / "nope.cdm", tmp_path / "out") == 2

    def test_unknown_subcommand_exit_2(self, tmp_path):
        man = make_split(tmp_path, 1.0)
        assert run("frobnicate", man, tmp_path / "out") == 2

    def test_threshold_command(self, tmp_path):
        man = make_split(tmp_path, 1.0)
        assert run("threshold", man, tmp_path / "out") == 0
        text = (tmp_path / "out" / "threshold.txt").read_text()
        value = float([l for l in text.splitlines() if l.startswith("threshold:")][0]
                      .split(":")[1])
        assert value == pytest.approx(THRESHOLD, abs=1e-6)

    def test_threshold_wrong_kind_exit_2(self, tmp_path):
        assert run("threshold", MANIFESTS / "radial_log.cdm", tmp_path / "out") == 2

    def test_riccati_blow_up_time(self, tmp_path):
        man = make_split(tmp_path, 1.0)
        assert run("riccati", man, tmp_path / "out") == 0
        text = (tmp_path / "out" / "riccati.txt").read_text()
        t = float([l for l in text.splitlines() if l.startswith("blow_up_time:")][0]
                  .split(":")[1])
        assert t == pytest.approx(1.5708, abs=1e-3)

    def test_geodesic_trace_files(self, tmp_path):
        man = make_split(tmp_path, 1.0)
        assert run("geodesic", man, tmp_path / "out") == 0
        lines = (tmp_path / "out" / "geodesic.csv").read_text().splitlines()
        header = [l for l in lines if not l.startswith("#")][0]
        assert header.split(",")[:4] == ["t", "r", "y1", "y2"]
        assert "clairaut" in header and "f_gamma" in header

    def test_compare_radial(self, tmp_path):
        assert run("compare", MANIFESTS / "radial_log.cdm", tmp_path / "out") == 0
        lines = (tmp_path / "out" / "compare.csv").read_text().splitlines()
        data = [l for l in lines if not l.startswith("#")]
        assert data[0] == "r,lap_f_r,bound,slack,v_integral"
        assert len(data) == 101

    def test_compare_wrong_kind_exit_2(self, tmp_path):
        man = make_split(tmp_path, 1.0)
        assert run("compare", man, tmp_path / "out") == 2

    def test_bochner_command(self, tmp_path):
        man = make_split(tmp_path, 1.0)
        assert run("bochner", man, tmp_path / "out") == 0

    def test_grid_override(self, tmp_path):
        man = make_split(tmp_path, THRESHOLD + 0.01)
        assert run("verify-cd", man, tmp_path / "out", grid_overrides=["r_count=41"]) == 0
        text = (tmp_path / "out" / "cd_report.txt").read_text()
        assert "x 41" in text

    def test_bad_override_exit_2(self, tmp_path):
        man = make_split(tmp_path, 1.0)
        assert run("verify-cd", man, tmp_path / "out",
                   grid_overrides=["r_count=a lot"]) == 2
        assert run("verify-cd", man, tmp_path / "out", grid_overrides=["zoom=2"]) == 2


class TestSuite:
    def test_split_suite_pass(self, tmp_path):
        man = make_split(tmp_path, THRESHOLD + 0.01)
        assert run("suite", man, tmp_path / "out") == 0
        summary = (tmp_path / "out" / "summary.txt").read_text()
        assert "overall: PASS" in summary
        for check in ("curvature", "verify-cd", "threshold", "rigidity", "riccati",
                      "geodesic", "bochner"):
            assert f"{check}: PASS" in summary

    def test_split_suite_fail_below_threshold(self, tmp_path):
        man = make_split(tmp_path, THRESHOLD - 0.01)
        assert run("suite", man, tmp_path / "out") == 1
        summary = (tmp_path / "out" / "summary.txt").read_text()
        assert "verify-cd: FAIL" in summary
        assert "overall: FAIL" in summary

    def test_radial_suite(self, tmp_path):
        assert run("suite", MANIFESTS / "radial_log.cdm", tmp_path / "out",
                   grid_overrides=["r_count=41"]) == 0

    @pytest.mark.parametrize("name", ["sphere_example.cdm", "radial_log.cdm",
                                      "twisted_flat.cdm", "polar_general.cdm"])
    def test_shipped_manifests_pass(self, tmp_path, name):
        code = run("suite", MANIFESTS / name, tmp_path / "out",
                   grid_overrides=["r_count=31", "fiber_count=3"])
        assert code == 0
        assert "overall: PASS" in (tmp_path / "out" / "summary.txt").read_text()

    def test_header_metadata(self, tmp_path):
        man = make_split(tmp_path, THRESHOLD + 0.01)
        run("verify-cd", man, tmp_path / "out", seed=7)
        text = (tmp_path / "out" / "cd_report.txt").read_text()
        assert "manifest sha256:" in text
        assert "seed: 7" in text
        assert "sampled, not proven" in text
        assert "grid:" in text
        assert "tol_cd" in text


class TestDeterminism:
    def test_suite_byte_identical(self, tmp_path):
        man = make_split(tmp_path, THRESHOLD + 0.01)
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("suite", man, a, seed=42, grid_overrides=["r_count=41"]) == 0
        assert run("suite", man, b, seed=42, grid_overrides=["r_count=41"]) == 0
        files_a = sorted(p.name for p in a.iterdir())
        files_b = sorted(p.name for p in b.iterdir())
        assert files_a == files_b and files_a
        for name in files_a:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_seed_changes_sampled_reports(self, tmp_path):
        man = make_split(tmp_path, THRESHOLD + 0.01)
        a, b = tmp_path / "a", tmp_path / "b"
        run("bochner", man, a, seed=1)
        run("bochner", man, b, seed=2)
        strip = lambda p: [l for l in (p / "bochner.csv").read_text().splitlines()
                           if not l.startswith("#")]
        assert strip(a) != strip(b)

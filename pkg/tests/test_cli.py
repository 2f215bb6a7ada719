import json
import subprocess
import sys

import numpy as np
import pytest

from graphdim.cli import main
from graphdim.harness import load_cloud


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def sphere_csv(tmp_path):
    path = tmp_path / "cloud.csv"
    assert run("synth", "--kind", "sphere", "--d", 2, "--p", 5, "--n", 300, "--seed", 42, "--out", path) == 0
    return path


class TestSynth:
    def test_writes_cloud(self, sphere_csv):
        cloud = load_cloud(sphere_csv)
        assert (cloud.n, cloud.p) == (300, 5)
        np.testing.assert_allclose(np.linalg.norm(cloud.points, axis=1), 1.0, atol=1e-12)

    def test_deterministic(self, tmp_path, sphere_csv):
        again = tmp_path / "again.csv"
        run("synth", "--kind", "sphere", "--d", 2, "--p", 5, "--n", 300, "--seed", 42, "--out", again)
        assert again.read_bytes() == sphere_csv.read_bytes()

    def test_params_noise_rotation(self, tmp_path):
        out = tmp_path / "ds.csv"
        code = run("synth", "--kind", "deformed_sphere", "--d", 2, "--p", 6, "--n", 50, "--param", "c=0.1",
                   "--param", "r=0.3", "--noise", 0.05, "--rotate", "--out", out)
        assert code == 0 and load_cloud(out).p == 6

    @pytest.mark.parametrize(
        "argv",
        [
            ["synth", "--kind", "sphere", "--d", 5, "--p", 5, "--n", 10, "--out", "x.csv"],
            ["synth", "--kind", "blob", "--d", 2, "--p", 3, "--n", 10, "--out", "x.csv"],
            ["synth", "--kind", "sphere", "--d", 2, "--p", 3, "--n", 10, "--param", "R", "--out", "x.csv"],
            ["synth", "--kind", "sphere", "--d", 2, "--p", 3, "--n", 0, "--out", "x.csv"],
            ["synth", "--kind", "sphere", "--d", 2],
            [],
        ],
    )
    def test_usage_errors(self, argv, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        with pytest.raises(SystemExit) as exc:
            code = run(*argv)
            raise SystemExit(code)
        assert exc.value.code == 1


class TestEstimate:
    def test_single_k(self, tmp_path, sphere_csv):
        out = tmp_path / "r.json"
        assert run("estimate", "--in", sphere_csv, "--method", "qe", "--k", 30, "--out", out) == 0
        doc = json.loads(out.read_text())
        assert doc["method"] == "qe" and doc["K"] == 30
        assert doc["d_hat"] == pytest.approx(2.0, abs=0.05)
        assert doc["d_rounded"] == 2

    @pytest.mark.parametrize("method", ["tls", "local-pca", "twonn"])
    def test_other_methods(self, tmp_path, sphere_csv, method):
        out = tmp_path / "r.json"
        assert run("estimate", "--in", sphere_csv, "--method", method, "--k", 30, "--out", out) == 0
        assert abs(json.loads(out.read_text())["d_hat"] - 2.0) < 0.5

    def test_grid(self, tmp_path, sphere_csv):
        out = tmp_path / "r.json"
        code = run("estimate", "--in", sphere_csv, "--method", "tls", "--k-grid", "20:60:10", "--window", 3,
                   "--workers", 2, "--out", out)
        assert code == 0
        doc = json.loads(out.read_text())
        assert [row["K"] for row in doc["per_k"]] == [20, 30, 40, 50, 60]
        assert doc["stability"]["stable"] is True
        assert doc["d_hat"] == doc["stability"]["mean"]

    def test_header_flag(self, tmp_path, sphere_csv):
        with_header = tmp_path / "h.csv"
        with_header.write_text("a,b,c,d,e\n" + sphere_csv.read_text())
        out = tmp_path / "r.json"
        assert run("estimate", "--in", with_header, "--header", "--method", "twonn", "--k", 5, "--out", out) == 0
        assert run("estimate", "--in", with_header, "--method", "twonn", "--k", 5, "--out", out) == 2

    def test_needs_k(self, tmp_path, sphere_csv):
        assert run("estimate", "--in", sphere_csv, "--method", "qe", "--out", tmp_path / "r.json") == 1

    def test_bad_k(self, tmp_path, sphere_csv):
        assert run("estimate", "--in", sphere_csv, "--method", "qe", "--k", 1, "--out", tmp_path / "r.json") == 1

    def test_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n3\n")
        assert run("estimate", "--in", bad, "--method", "qe", "--k", 5, "--out", tmp_path / "r.json") == 2

    def test_k_too_large_for_cloud(self, tmp_path, sphere_csv):
        assert run("estimate", "--in", sphere_csv, "--method", "qe", "--k", 400, "--out", tmp_path / "r.json") == 2

    def test_estimation_failure(self, tmp_path):
        circle = tmp_path / "circle.csv"
        run("synth", "--kind", "sphere", "--d", 1, "--p", 3, "--n", 100, "--out", circle)
        code = run("estimate", "--in", circle, "--method", "tls", "--k", 10, "--out", tmp_path / "r.json")
        assert code == 3
        code = run("estimate", "--in", circle, "--method", "tls", "--k-grid", "10,20", "--window", 2,
                   "--out", tmp_path / "r.json")
        assert code == 3


class TestBench:
    def write_config(self, tmp_path, **overrides):
        raw = {"manifolds": ["M5"], "methods": ["qe", "twonn"], "n": 100, "replicates": 2,
               "k_grid": "20:30:10", "window": 2, "master_seed": 3}
        raw.update(overrides)
        path = tmp_path / "bench.json"
        path.write_text(json.dumps(raw))
        return path

    def test_outputs_and_determinism(self, tmp_path):
        cfg = self.write_config(tmp_path)
        assert run("bench", "--config", cfg, "--out", tmp_path / "a", "--workers", 1) == 0
        assert run("bench", "--config", cfg, "--out", tmp_path / "b", "--workers", 2) == 0
        for name in ("results.csv", "results.json", "config.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        timing = json.loads((tmp_path / "a" / "timing.json").read_text())
        assert set(timing) == {"M5/qe", "M5/twonn"}
        rows = (tmp_path / "a" / "results.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 3

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bench.json"
        path.write_text("{not json")
        assert run("bench", "--config", path, "--out", tmp_path / "o") == 2

    def test_bad_config(self, tmp_path):
        cfg = self.write_config(tmp_path, replicates=0)
        assert run("bench", "--config", cfg, "--out", tmp_path / "o") == 2

    def test_missing_config(self, tmp_path):
        assert run("bench", "--config", tmp_path / "none.json", "--out", tmp_path / "o") == 2

    def test_failed_aggregation_exit(self, tmp_path):
        circle = {"kind": "sphere", "d": 1, "p": 3, "name": "circle"}
        cfg = self.write_config(tmp_path, manifolds=[circle], methods=["tls"])
        assert run("bench", "--config", cfg, "--out", tmp_path / "o", "--workers", 1) == 3
        assert (tmp_path / "o" / "results.json").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "graphdim", "estimate", "--in", tmp_path / "x.csv"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage" in proc.stderr

import json
import math

import numpy as np
import pytest

from proxanneal import contains, cube, dump_body, load_body
from proxanneal.cli import main


@pytest.fixture
def body_file(tmp_path):
    path = tmp_path / "cube2d.json"
    path.write_text(dump_body(cube(2, 2.0)))
    return path


def _read_report(path):
    return json.loads(path.read_text())


class TestCool:
    def test_end_to_end(self, tmp_path, body_file):
        report = tmp_path / "report.json"
        out = tmp_path / "samples.jsonl"
        rc = main([
            "cool", "--body", str(body_file), "--C", "2", "--eps", "0.5",
            "--eta", "0.1", "--seed", "7",
            "--out", str(out), "--report", str(report),
        ])
        assert rc == 0
        doc = _read_report(report)
        assert doc["failures"] == 0
        body = load_body(body_file.read_text())
        final = doc["per_replica"][0]["final_point"]
        assert contains(body, final)
        # samples round-trip through the jsonl format
        line = json.loads(out.read_text().splitlines()[0])
        assert line["x"] == final

    def test_report_reparses_equal(self, tmp_path, body_file):
        report = tmp_path / "report.json"
        main([
            "cool", "--body", str(body_file), "--C", "2", "--eps", "0.5",
            "--eta", "0.1", "--seed", "3", "--report", str(report),
        ])
        doc = _read_report(report)
        assert json.loads(json.dumps(doc)) == doc


class TestSample:
    def test_n_zero_echoes_init(self, tmp_path, body_file):
        out = tmp_path / "s.csv"
        report = tmp_path / "r.json"
        rc = main([
            "sample-uniform", "--body", str(body_file), "--n", "0", "--h", "1",
            "--N", "1", "--seed", "3", "--format", "csv",
            "--out", str(out), "--report", str(report),
        ])
        assert rc == 0
        doc = _read_report(report)
        assert doc["total_queries"] == 0
        # the echoed point is the replica's unit-ball initialization
        from proxanneal import chain_stream, sample_unit_ball

        init = sample_unit_ball(2, chain_stream(3, 0))
        got = np.array([float(v) for v in out.read_text().split(",")])
        assert np.array_equal(got, init)

    def test_byte_identical_reruns(self, tmp_path, body_file):
        args = [
            "sample-uniform", "--body", str(body_file), "--M", "2",
            "--eta", "0.1", "--eps", "0.5", "--seed", "5", "--replicas", "3",
        ]
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_jobs_do_not_change_output(self, tmp_path, body_file):
        base = [
            "sample-uniform", "--body", str(body_file), "--M", "2",
            "--eta", "0.1", "--eps", "0.5", "--seed", "5", "--replicas", "4",
        ]
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        main(base + ["--out", str(a)])
        main(base + ["--jobs", "4", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_gaussian_requires_sigma2(self, body_file):
        assert main(["sample-gaussian", "--body", str(body_file),
                     "--M", "2", "--eta", "0.1", "--eps", "0.5"]) == 1

    def test_gaussian_runs(self, tmp_path, body_file):
        report = tmp_path / "r.json"
        rc = main([
            "sample-gaussian", "--body", str(body_file), "--sigma2", "1.0",
            "--M", "2", "--eta", "0.1", "--eps", "0.5", "--seed", "2",
            "--report", str(report),
        ])
        assert rc == 0
        assert _read_report(report)["failures"] == 0

    def test_explicit_overrides_merge_with_planner(self, tmp_path, body_file):
        report = tmp_path / "r.json"
        rc = main([
            "sample-uniform", "--body", str(body_file), "--M", "2",
            "--eta", "0.1", "--eps", "0.5", "--n", "17", "--seed", "2",
            "--report", str(report),
        ])
        assert rc == 0
        assert _read_report(report)["params"]["n"] == 17

    def test_rescale_applied_and_recorded(self, tmp_path):
        small = tmp_path / "small.json"
        from proxanneal import ball

        small.write_text(dump_body(ball(2, 0.5, allow_unnormalized=True)))
        report = tmp_path / "r.json"
        out = tmp_path / "s.jsonl"
        rc = main([
            "sample-uniform", "--body", str(small), "--M", "2", "--eta", "0.1",
            "--eps", "0.5", "--seed", "4", "--replicas", "5",
            "--out", str(out), "--report", str(report),
        ])
        assert rc == 0
        doc = _read_report(report)
        assert doc["rescale_factor"] == 0.5
        # emitted samples live in the original frame
        for line in out.read_text().splitlines():
            x = json.loads(line)["x"]
            assert math.hypot(*x) <= 0.5 + 1e-12


class TestConfigAndErrors:
    def test_config_file_with_flag_override(self, tmp_path, body_file):
        cfg = tmp_path / "job.json"
        cfg.write_text(json.dumps({
            "body": str(body_file), "M": 2.0, "eta": 0.1, "eps": 0.5,
            "seed": 9, "replicas": 2,
        }))
        report = tmp_path / "r.json"
        rc = main(["sample-uniform", "--config", str(cfg), "--replicas", "1",
                   "--report", str(report)])
        assert rc == 0
        doc = _read_report(report)
        assert doc["replicas"] == 1  # flag wins
        assert doc["seed"] == 9  # config fills the rest

    def test_unreadable_body_exits_1(self):
        assert main(["sample-uniform", "--body", "/no/such/file.json",
                     "--M", "2", "--eta", "0.1", "--eps", "0.5"]) == 1

    def test_invalid_body_exits_1(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"dim\": 2}")
        assert main(["sample-uniform", "--body", str(bad),
                     "--M", "2", "--eta", "0.1", "--eps", "0.5"]) == 1

    def test_usage_error_exits_1(self):
        assert main(["frobnicate"]) == 1
        assert main(["cool"]) == 1

    def test_bad_retry_policy(self, body_file):
        assert main(["cool", "--body", str(body_file), "--C", "2",
                     "--eps", "0.5", "--eta", "0.1", "--retry", "sometimes"]) == 1


class TestVerifyCommand:
    def test_verify_passes(self, tmp_path, body_file):
        report = tmp_path / "v.json"
        rc = main(["verify", "--body", str(body_file), "--C", "2",
                   "--seed", "1", "--report", str(report)])
        assert rc == 0
        doc = _read_report(report)
        assert doc["passed"]
        assert any("warmness" in c["name"] for c in doc["checks"])


class TestBenchCommand:
    def test_small_matrix(self, tmp_path):
        report = tmp_path / "b.json"
        table = tmp_path / "b.csv"
        rc = main([
            "bench", "--dims", "2,3,4,5", "--bench-seeds", "1",
            "--eps", "0.5", "--eta", "0.2", "--seed", "1",
            "--report", str(report), "--out", str(table),
        ])
        assert rc == 0
        doc = _read_report(report)
        assert len(doc["rows"]) == 4
        assert "slope" in doc["fit"]
        header = table.read_text().splitlines()[0]
        assert header == "d,seed,total_queries,seconds,failed"

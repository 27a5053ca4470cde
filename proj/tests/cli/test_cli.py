"""End-to-end checks of the dcoe command line tool.

usage: test_cli.py <dcoe binary> <schema dir>
"""

import json
import math
import os
import random
import re
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import jsonschema

DCOE = None
SCHEMAS = None
ERROR_LINE = re.compile(r"^dcoe: error code=[A-Za-z]+: .+$")


def schema(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def run(*args, env_extra=None, cwd=None):
    env = dict(os.environ)
    env.pop("DCOE_SEED", None)
    env["SOURCE_DATE_EPOCH"] = "1700000000"
    env.update(env_extra or {})
    return subprocess.run([str(DCOE), *map(str, args)], capture_output=True, text=True, env=env, cwd=cwd)


def write_lines(path, values):
    path.write_text("".join(f"{v!r}\n" for v in values))
    return path


class CliTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._tmp = tempfile.TemporaryDirectory(prefix="dcoe_cli_")
        cls.tmp = Path(cls._tmp.name)
        rng = random.Random(11)
        p, s = 2000, 205
        z = [rng.gauss(0.0, 1.0) for _ in range(p)]
        truth = sorted(rng.sample(range(p), s))
        for i in truth:
            z[i] += 3.0
        cls.p = p
        cls.z = write_lines(cls.tmp / "z.txt", z)
        cls.truth_set = {i + 1 for i in truth}
        (cls.tmp / "truth.txt").write_text("".join(f"{i + 1}\n" for i in truth))
        cls.truth = cls.tmp / "truth.txt"
        cls.null_z = write_lines(cls.tmp / "null.txt", [rng.gauss(0.0, 1.0) for _ in range(p)])
        cls.saturated = write_lines(cls.tmp / "sat.txt", [10.0] * p)
        cls.negative = write_lines(cls.tmp / "neg.txt", [-10.0] * p)
        cls.short = write_lines(cls.tmp / "short.txt", [1.0, 2.0, 3.0])

        cls.calib = cls.tmp / "c.json"
        r = run("calibrate", "--p", p, "--n", 500, "--null", "independent", "--seed", 7, "--out", cls.calib)
        assert r.returncode == 0, r.stderr

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()

    def assert_usage_error(self, result):
        self.assertEqual(result.returncode, 2, result.stderr)
        lines = result.stderr.strip().splitlines()
        self.assertEqual(len(lines), 1, result.stderr)
        self.assertRegex(lines[0], ERROR_LINE)

    # calibrate

    def test_calibrate_example(self):
        c = json.loads(self.calib.read_text())
        jsonschema.validate(c, schema("null_calibration"))
        self.assertAlmostEqual(c["quantile_level"], 1 - 1 / math.sqrt(math.log(2000)), places=9)
        self.assertEqual(c["n_draws"], 500)
        self.assertEqual(c["created"], "2023-11-14T22:13:20Z")

    def test_calibrate_validation(self):
        self.assert_usage_error(run("calibrate", "--n", 500, "--out", self.tmp / "x.json"))
        self.assert_usage_error(run("calibrate", "--p", 2000, "--n", 10, "--out", self.tmp / "x.json"))
        self.assert_usage_error(run("calibrate", "--p", 2000, "--null", "banana", "--out", self.tmp / "x.json"))
        self.assert_usage_error(run("calibrate", "--p", 50, "--null", "covariance", "--out", self.tmp / "x.json"))
        self.assertFalse((self.tmp / "x.json").exists())

    def test_calibrate_covariance_and_external(self):
        out = self.tmp / "cov.json"
        r = run("calibrate", "--p", 200, "--n", 100, "--null", "covariance", "--model", "ar", "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        c = json.loads(out.read_text())
        jsonschema.validate(c, schema("null_calibration"))
        self.assertEqual(c["null_source"]["covariance"]["type"], "autoregressive")

        rng = random.Random(3)
        matrix = self.tmp / "nullmat.txt"
        matrix.write_text("".join(" ".join(repr(rng.gauss(0, 1)) for _ in range(20)) + "\n" for _ in range(30)))
        out = self.tmp / "ext.json"
        r = run("calibrate", "--p", 20, "--null", "external", "--null-matrix", matrix, "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertEqual(json.loads(out.read_text())["n_draws"], 30)
        self.assert_usage_error(run("calibrate", "--p", 21, "--null", "external", "--null-matrix", matrix,
                                    "--out", out))

    def test_calibrate_is_worker_independent(self):
        outputs = []
        for workers in (1, 2, 8):
            out = self.tmp / f"cw{workers}.json"
            r = run("calibrate", "--p", 500, "--n", 200, "--seed", 5, "--workers", workers, "--out", out)
            self.assertEqual(r.returncode, 0, r.stderr)
            outputs.append(out.read_bytes())
        self.assertEqual(outputs[0], outputs[1])
        self.assertEqual(outputs[0], outputs[2])

    def test_seed_environment_override(self):
        a, b, c = (self.tmp / n for n in ("sa.json", "sb.json", "sc.json"))
        run("calibrate", "--p", 300, "--n", 100, "--seed", 1, "--out", a)
        run("calibrate", "--p", 300, "--n", 100, "--seed", 2, "--out", b)
        run("calibrate", "--p", 300, "--n", 100, "--seed", 1, "--out", c, env_extra={"DCOE_SEED": "2"})
        self.assertNotEqual(a.read_bytes(), b.read_bytes())
        self.assertEqual(b.read_bytes(), c.read_bytes())
        self.assert_usage_error(run("calibrate", "--p", 300, "--n", 100, "--out", c, env_extra={"DCOE_SEED": "x"}))

    # estimate-pi

    def test_estimate_pi(self):
        out = self.tmp / "pi.json"
        r = run("estimate-pi", "--z", self.saturated, "--calibration", self.calib, "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        est = json.loads(out.read_text())
        jsonschema.validate(est, schema("proportion_estimate"))
        self.assertGreaterEqual(est["pi_hat"], 0.99)
        self.assertIn("pi_hat=", r.stdout)

        r = run("estimate-pi", "--z", self.null_z, "--calibration", self.calib, "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertLess(json.loads(out.read_text())["pi_hat"], 0.05)

        r = run("estimate-pi", "--z", self.negative, "--calibration", self.calib, "--out", out)
        self.assertEqual(json.loads(out.read_text())["pi_hat"], 0)

    def test_estimate_pi_mismatch(self):
        r = run("estimate-pi", "--z", self.short, "--calibration", self.calib)
        self.assert_usage_error(r)
        self.assertIn("code=SizeMismatch", r.stderr)
        self.assert_usage_error(run("estimate-pi", "--z", self.tmp / "missing.txt", "--calibration", self.calib))

    # select

    def select(self, *extra, name="sel.json"):
        out = self.tmp / name
        r = run("select", "--z", self.z, "--out", out, *extra)
        self.assertEqual(r.returncode, 0, r.stderr)
        report = json.loads(out.read_text())
        jsonschema.validate(report, schema("selection_report"))
        return report, r

    def test_select_known_s_equal_p(self):
        report, r = self.select("--beta", 0.5, "--s", f"known:{self.p}")
        self.assertEqual(report["s_source"], "known")
        self.assertEqual(report["s_used"], self.p)
        self.assertEqual(report["k_selected"], len(report["selected"]))
        self.assertTrue(r.stdout.startswith("selected "))
        self.assertTrue(Path(report["trace_path"]).exists())

    def test_select_nested_in_beta(self):
        loose, _ = self.select("--beta", 0.2, "--s", "known:205", name="b2.json")
        tight, _ = self.select("--beta", 0.1, "--s", "known:205", name="b1.json")
        self.assertTrue(set(loose["selected"]) <= set(tight["selected"]))
        self.assertLess(len(loose["selected"]), len(tight["selected"]))

    def test_select_truth_evaluation(self):
        report, _ = self.select("--beta", 0.1, "--s", "known:205", "--truth", self.truth)
        chosen = set(report["selected"])
        hits = len(chosen & self.truth_set)
        fnp = 1 - hits / len(self.truth_set)
        fdp = (len(chosen) - hits) / len(chosen) if chosen else 0.0
        ev = report["evaluation"]
        self.assertAlmostEqual(ev["fnp"], fnp, places=9)
        self.assertAlmostEqual(ev["fdp"], fdp, places=9)
        self.assertAlmostEqual(ev["fm_index"], math.sqrt((1 - fnp) * (1 - fdp)), places=9)
        self.assertEqual(ev["n_selected"], len(chosen))

    def test_select_threshold_and_trace(self):
        report, _ = self.select("--beta", 0.2, "--s", "known:205", "--trace", self.tmp / "trace.csv")
        rows = (self.tmp / "trace.csv").read_text().splitlines()
        self.assertEqual(rows[0], "rank,index,t,fnp_hat")
        self.assertEqual(len(rows), self.p + 1)
        trace = [r.split(",") for r in rows[1:]]
        k = report["k_selected"]
        self.assertEqual(sorted(int(r[1]) for r in trace[:k]), report["selected"])
        self.assertTrue(all(float(r[3]) >= 0.2 for r in trace[:k]))
        self.assertLess(float(trace[k][3]), 0.2)
        self.assertEqual(float(trace[k][2]), report["threshold"])

    def test_select_estimated(self):
        report, _ = self.select("--beta", 0.2, "--s", f"estimate:{self.calib}")
        self.assertEqual(report["s_source"], "estimated")
        self.assertAlmostEqual(report["s_used"], report["proportion"]["s_hat"], places=6)
        self.assertIsNone(report["warning"])

    def test_select_degenerate_proportion(self):
        out = self.tmp / "deg.json"
        r = run("select", "--z", self.negative, "--beta", 0.2, "--s", f"estimate:{self.calib}", "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        report = json.loads(out.read_text())
        jsonschema.validate(report, schema("selection_report"))
        self.assertEqual(report["warning"], "DegenerateProportion")
        self.assertEqual(report["selected"], [])

    def test_select_validation(self):
        out = self.tmp / "bad.json"
        for extra in (("--beta", 1.5, "--s", "known:5"), ("--beta", 0, "--s", "known:5"),
                      ("--beta", 0.1, "--s", "known:0"), ("--beta", 0.1, "--s", "known:abc"),
                      ("--beta", 0.1, "--s", "guess:5"), ("--beta", 0.1)):
            self.assert_usage_error(run("select", "--z", self.z, "--out", out, *extra))
        self.assertFalse(out.exists())

    def test_select_write_failure_is_runtime(self):
        r = run("select", "--z", self.z, "--beta", 0.1, "--s", "known:205", "--out", "/proc/dcoe/nope.json")
        self.assertEqual(r.returncode, 1, r.stderr)
        self.assertRegex(r.stderr.strip(), ERROR_LINE)

    def test_select_reruns_are_byte_identical(self):
        a, _ = self.select("--beta", 0.1, "--s", f"estimate:{self.calib}", name="r1.json")
        b, _ = self.select("--beta", 0.1, "--s", f"estimate:{self.calib}", name="r2.json")
        a.pop("trace_path")
        b.pop("trace_path")
        self.assertEqual(a, b)
        self.assertEqual((self.tmp / "r1.trace.csv").read_bytes(), (self.tmp / "r2.trace.csv").read_bytes())

    # theory

    def test_theory(self):
        r = run("theory", "--gamma", 0.3, "--eta", 0.95, "--p", 2000, "--json")
        self.assertEqual(r.returncode, 0, r.stderr)
        t = json.loads(r.stdout)
        jsonschema.validate(t, schema("theory"))
        self.assertAlmostEqual(t["mu1"], 2.1355424313, places=8)
        self.assertAlmostEqual(t["mu2"], 1.6710584125, places=8)
        self.assertEqual(t["mu_min"], t["mu2"])
        self.assertAlmostEqual(t["phase_boundary"], -0.35, places=12)
        r = run("theory", "--gamma", 0.3, "--eta", 0.57)
        self.assertIn("mu2=2.927306285", r.stdout)
        self.assert_usage_error(run("theory", "--gamma", 0.3, "--eta", 1.5))
        self.assert_usage_error(run("theory", "--gamma", 0.3))

    # reproduce

    def reproduce(self, out, *args, workers=1):
        r = run("reproduce", "--out-dir", out, "--workers", workers, *args)
        self.assertEqual(r.returncode, 0, r.stderr)
        jsonschema.validate(json.loads((out / "config.json").read_text()), schema("run_config"))
        return r

    def tree(self, root):
        return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    def assert_worker_independent(self, name, *args):
        trees = []
        for workers in (1, 2, 8):
            out = self.tmp / f"{name}_w{workers}"
            self.reproduce(out, *args, workers=workers)
            trees.append(self.tree(out))
        self.assertEqual(trees[0], trees[1])
        self.assertEqual(trees[0], trees[2])
        return trees[0]

    def test_reproduce_table1_small(self):
        files = self.assert_worker_independent("t1", "--experiment", "table1", "--model", "block", "--A", 2,
                                               "--replications", 4)
        self.assertEqual(sorted(files), ["config.json", "raw.csv", "results.csv"])
        lines = files["results.csv"].decode().splitlines()
        self.assertEqual(lines[0], "method,mean_fnp,sd_fnp,mean_fdp,sd_fdp,mean_fm,sd_fm")
        self.assertTrue(lines[1].startswith('"DCOE(beta=0.2,s=known)",'))
        config = json.loads(files["config.json"])
        self.assertEqual(config["spec"]["signal_strength"], {"type": "constant", "value": 2.0})
        self.assertEqual(config["spec"]["n_replications"], 4)
        self.assertEqual(config["s"], 205)
        self.assertEqual(len(files["raw.csv"].decode().splitlines()), 1 + 4 * 4)

    def test_reproduce_table2_small(self):
        files = self.assert_worker_independent("t2", "--experiment", "table2-dcoe", "--replications", 3)
        config = json.loads(files["config.json"])
        self.assertEqual(config["calibration"]["n_draws"], 500)
        self.assertNotIn("created", config["calibration"])

    def test_reproduce_figure3_small(self):
        files = self.assert_worker_independent("f3", "--experiment", "figure3", "--model", "ar",
                                               "--replications", 3)
        rows = files["curve.csv"].decode().splitlines()
        self.assertEqual(rows[0], "replication,rank,t,fnp_hat,fnp_true,abs_diff,mu1,mu2,mu_min")
        self.assertEqual(len(rows), 1 + 3 * 2000)
        mu_min = float(rows[1].split(",")[-1])
        self.assertAlmostEqual(mu_min, 1.6860781353, places=8)

    def test_reproduce_grid(self):
        files = self.assert_worker_independent("grid", "--experiment", "grid")
        mask = files["signal_mask.txt"].decode()
        self.assertEqual(mask.count("1"), 994)
        self.assertEqual(len(mask.splitlines()), 100)
        loose = files["selected_dcoe_beta_0.5_s_estimated.txt"].decode()
        tight = files["selected_dcoe_beta_0.1_s_estimated.txt"].decode()
        self.assertTrue(all(t == "1" for l, t in zip(loose, tight) if l == "1"))
        self.assertEqual(files["metrics.csv"].decode().splitlines()[0], "method,fnp,fdp,fm,n_selected")

    def test_reproduce_custom_config(self):
        cfg = self.tmp / "custom.json"
        cfg.write_text(json.dumps({
            "name": "custom", "p": 300, "gamma": 0.4, "signal_strength": {"type": "uniform", "lo": 2, "hi": 4},
            "covariance": {"type": "factor", "tau": 0.5, "h_seed": 2},
            "methods": [{"type": "dcoe", "beta": 0.1, "s_source": "estimated"}, {"type": "bh", "alpha": 0.1}],
            "n_replications": 5, "master_seed": 3, "calibration_draws": 100}))
        self.assert_worker_independent("custom", "--config", cfg)

    def test_reproduce_errors(self):
        self.assert_usage_error(run("reproduce", "--experiment", "table9"))
        self.assert_usage_error(run("reproduce", "--experiment", "table1", "--model", "nope"))
        self.assert_usage_error(run("reproduce", "--experiment", "grid", "--A", 3))
        self.assert_usage_error(run("reproduce", "--experiment", "table1", "--replications", 0))
        self.assert_usage_error(run("reproduce"))
        bad = self.tmp / "broken_config.json"
        bad.write_text("{not json")
        self.assert_usage_error(run("reproduce", "--config", bad))

        npd = self.tmp / "npd.json"
        npd.write_text(json.dumps({
            "p": 3, "gamma": 0.5, "signal_strength": 3,
            "covariance": {"type": "explicit", "matrix": [[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1]]},
            "methods": [{"type": "bh", "alpha": 0.05}], "n_replications": 2}))
        r = run("reproduce", "--config", npd, "--out-dir", self.tmp / "npd")
        self.assertEqual(r.returncode, 1, r.stderr)
        self.assertIn("code=NotPositiveDefinite", r.stderr)


if __name__ == "__main__":
    DCOE = Path(sys.argv.pop(1)).resolve()
    SCHEMAS = Path(sys.argv.pop(1)).resolve()
    unittest.main(verbosity=2)

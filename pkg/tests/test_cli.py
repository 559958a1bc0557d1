import json
import os

import numpy as np
import pytest
from scipy import stats

from se3diffuse import backbone, cli, so3


def run(args):
    return cli.main(args)


def read_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1)


class TestIGSO3Commands:
    def test_eval_density_integrates_to_one(self, tmp_path):
        out = tmp_path / "eval.csv"
        assert run(["igso3", "eval", "--t", "0.5", "--grid", "1000",
                    "--out", str(out)]) == 0
        data = read_csv(out)
        assert data.shape == (1000, 3)
        omega, f = data[:, 0], data[:, 1]
        integral = np.trapezoid(np.clip(f, 0, None) * (1 - np.cos(omega)) / np.pi, omega)
        assert abs(integral - 1.0) < 1e-4
        assert os.path.exists(str(out) + ".manifest.json")

    def test_sample_flat_time_matches_uniform(self, tmp_path, rng):
        out = tmp_path / "samp.csv"
        assert run(["igso3", "sample", "--t", "50", "--n", "100000",
                    "--seed", "3", "--out", str(out)]) == 0
        quats = read_csv(out)
        angles = so3.rotation_angle(so3.rotation_from_quat(quats))
        ref = so3.rotation_angle(so3.sample_uniform_so3(rng, 100_000))
        assert stats.ks_2samp(angles, ref).statistic < 0.02

    def test_missing_t_is_usage_error(self, tmp_path):
        out = tmp_path / "never.csv"
        assert run(["igso3", "eval", "--grid", "100", "--out", str(out)]) == 1
        assert not out.exists()

    def test_score_output_schema(self, tmp_path):
        out = tmp_path / "score.csv"
        assert run(["igso3", "score", "--t", "0.5", "--n", "100",
                    "--seed", "1", "--out", str(out)]) == 0
        data = read_csv(out)
        assert data.shape == (100, 4)
        assert np.all(data[:, 0] >= 0) and np.all(data[:, 0] <= np.pi)

    def test_below_t_min_is_domain_error(self, tmp_path):
        out = tmp_path / "bad.csv"
        assert run(["igso3", "eval", "--t", "0.001", "--out", str(out)]) == 2

    def test_table_cache_roundtrip(self, tmp_path, monkeypatch):
        cache = tmp_path / "cache"
        monkeypatch.setenv(cli.CACHE_ENV, str(cache))
        assert run(["igso3", "table", "--t", "0.5"]) == 0
        files = list(cache.glob("igso3_*.csv"))
        assert len(files) == 1
        table = cli.load_table(str(files[0]))
        assert table.t == 0.5
        assert abs(table.raw_mass - 1.0) < 1e-6
        # Second invocation reuses the cache file untouched.
        mtime = files[0].stat().st_mtime_ns
        assert run(["igso3", "table", "--t", "0.5"]) == 0
        assert files[0].stat().st_mtime_ns == mtime

    def test_corrupt_table_is_io_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("not a table\n")
        with pytest.raises(OSError):
            cli.load_table(str(bad))


class TestScheduleCommand:
    def test_default_endpoints(self, tmp_path):
        out = tmp_path / "sched.csv"
        assert run(["schedule", "--out", str(out)]) == 0
        data = read_csv(out)
        header = out.read_text().splitlines()[0].split(",")
        assert header == ["s", "beta", "G_x", "trans_var", "sigma_r", "rot_var", "g_r"]
        first, last = data[0], data[-1]
        assert first[1] == 0.1 and first[4] == 0.1
        assert last[1] == 20.0 and last[5] == 2.25

    def test_log_variance_dominates_linear_at_midpoint(self, tmp_path):
        out_log = tmp_path / "log.csv"
        out_lin = tmp_path / "lin.csv"
        run(["schedule", "--kind", "logarithmic", "--points", "3", "--out", str(out_log)])
        run(["schedule", "--kind", "linear", "--points", "3", "--out", str(out_lin)])
        v_log = read_csv(out_log)[1, 5]
        v_lin = read_csv(out_lin)[1, 5]
        assert v_log >= v_lin

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"points": 7, "beta_max": 15.0}))
        out = tmp_path / "s.csv"
        assert run(["schedule", "--config", str(cfg), "--beta-max", "18.0",
                    "--out", str(out)]) == 0
        data = read_csv(out)
        assert data.shape[0] == 7  # from config file
        assert data[-1, 1] == 18.0  # flag wins over config

    def test_unknown_config_key_is_usage_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert run(["schedule", "--config", str(cfg), "--out",
                    str(tmp_path / "x.csv")]) == 1


class TestToyCommands:
    def test_reference_defaults(self):
        assert cli.TOY_DEFAULTS["paths"] == 5000
        assert cli.TOY_DEFAULTS["T"] == 4.0
        assert cli.TOY_DEFAULTS["steps"] == 200
        assert cli.TOY_DEFAULTS["atoms"] == 3

    def test_forward_reverse_compare(self, tmp_path):
        fwd, rev = tmp_path / "fwd", tmp_path / "rev"
        base = ["--atoms", "3", "--paths", "60", "--T", "2.0", "--steps", "8"]
        assert run(["toy", "forward", *base, "--seed", "1", "--out-dir", str(fwd)]) == 0
        assert run(["toy", "reverse", *base, "--seed", "2", "--out-dir", str(rev)]) == 0
        for d in (fwd, rev):
            assert (d / "manifest.json").exists()
            assert len(list(d.glob("t_*.csv"))) == 8
            data = read_csv(d / "t_0000.csv")
            assert data.shape == (60, 8)  # id, quaternion, 3 atom angles
        out = tmp_path / "cmp.json"
        assert run(["toy", "compare", "--run-a", str(fwd), "--run-b", str(rev),
                    "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert len(report["ks"]) == 8
        assert report["max_ks"] == max(report["ks"])

    def test_compare_with_itself_is_zero(self, tmp_path):
        fwd = tmp_path / "fwd"
        run(["toy", "forward", "--paths", "40", "--T", "1.0", "--steps", "5",
             "--seed", "1", "--out-dir", str(fwd)])
        out = tmp_path / "self.json"
        assert run(["toy", "compare", "--run-a", str(fwd), "--run-b", str(fwd),
                    "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["max_ks"] == 0.0

    def test_mismatched_grids_error(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(["toy", "forward", "--paths", "20", "--T", "1.0", "--steps", "5",
             "--seed", "1", "--out-dir", str(a)])
        run(["toy", "forward", "--paths", "20", "--T", "2.0", "--steps", "5",
             "--seed", "1", "--out-dir", str(b)])
        assert run(["toy", "compare", "--run-a", str(a), "--run-b", str(b),
                    "--out", str(tmp_path / "no.json")]) == 1


class TestSampleBackbones:
    def test_reference_defaults(self):
        assert cli.BACKBONE_DEFAULTS["zeta"] == 0.1
        assert cli.BACKBONE_DEFAULTS["n_steps"] == 500

    def test_zero_noise_is_seed_independent(self, tmp_path):
        args = ["sample-backbones", "--n-residues", "6", "--n-steps", "25",
                "--zeta", "0", "--score", "fixed-target"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run([*args, "--seed", "11", "--out", str(out_a)]) == 0
        assert run([*args, "--seed", "99", "--out", str(out_b)]) == 0
        assert (tmp_path / "a.pdb").read_bytes() == (tmp_path / "b.pdb").read_bytes()

    def test_pdb_parse_back_matches_trajectory(self, tmp_path):
        out = tmp_path / "run"
        assert run(["sample-backbones", "--n-residues", "5", "--n-steps", "30",
                    "--zeta", "0.5", "--seed", "4", "--out", str(out),
                    "--trajectory"]) == 0
        residues = backbone.read_pdb(str(tmp_path / "run.pdb"))
        rows = np.loadtxt(tmp_path / "run_trajectory.csv", delimiter=",", skiprows=1)
        final = rows[rows[:, 0] == rows[:, 0].min()]
        for res, row in zip(residues, final):
            expected = so3.rotation_from_quat(row[3:7])
            got = backbone.atom2frame(res).rotation
            assert np.abs(got - expected).max() < 1e-3

    def test_prior_only_runs(self, tmp_path):
        out = tmp_path / "prior"
        assert run(["sample-backbones", "--n-residues", "4", "--n-steps", "10",
                    "--zeta", "1.0", "--seed", "2", "--score", "prior-only",
                    "--out", str(out)]) == 0
        assert (tmp_path / "prior.pdb").exists()


class TestReproducibility:
    @pytest.mark.parametrize(
        "args,outputs",
        [
            (["schedule", "--points", "11", "--out", "OUT/s.csv"], ["OUT/s.csv"]),
            (
                ["igso3", "sample", "--t", "0.7", "--n", "200", "--seed", "5",
                 "--out", "OUT/q.csv"],
                ["OUT/q.csv"],
            ),
            (
                ["toy", "forward", "--paths", "25", "--T", "1.0", "--steps", "4",
                 "--seed", "9", "--out-dir", "OUT/toy"],
                ["OUT/toy/t_0000.csv", "OUT/toy/t_0003.csv"],
            ),
            (
                ["sample-backbones", "--n-residues", "4", "--n-steps", "12",
                 "--zeta", "0.3", "--seed", "7", "--out", "OUT/bb",
                 "--trajectory"],
                ["OUT/bb.pdb", "OUT/bb_trajectory.csv"],
            ),
        ],
    )
    def test_identical_config_gives_identical_bytes(self, tmp_path, args, outputs):
        snapshots = []
        for rep in ("one", "two"):
            root = tmp_path / rep
            root.mkdir()
            sub = [a.replace("OUT", str(root)) for a in args]
            assert run(sub) == 0
            snapshots.append(
                [open(o.replace("OUT", str(root)), "rb").read() for o in outputs]
            )
        assert snapshots[0] == snapshots[1]

    def test_manifest_written_with_config_snapshot(self, tmp_path):
        out = tmp_path / "s.csv"
        run(["schedule", "--points", "5", "--out", str(out)])
        manifest = json.loads((tmp_path / "s.csv.manifest.json").read_text())
        assert manifest["command"] == "schedule"
        assert manifest["config"]["points"] == 5
        assert manifest["config"]["beta_min"] == 0.1
        assert manifest["outputs"] == [str(out)]
        assert manifest["duration_s"] >= 0


class TestSchemas:
    def test_every_emitted_file_parses(self, tmp_path):
        run(["igso3", "eval", "--t", "0.5", "--grid", "50",
             "--out", str(tmp_path / "e.csv")])
        run(["igso3", "sample", "--t", "0.5", "--n", "20", "--seed", "0",
             "--out", str(tmp_path / "q.csv")])
        run(["igso3", "score", "--t", "0.5", "--n", "20", "--seed", "0",
             "--out", str(tmp_path / "sc.csv")])
        run(["schedule", "--points", "5", "--out", str(tmp_path / "sch.csv")])
        run(["toy", "forward", "--paths", "10", "--T", "1.0", "--steps", "3",
             "--seed", "0", "--out-dir", str(tmp_path / "toy")])
        run(["sample-backbones", "--n-residues", "3", "--n-steps", "8",
             "--zeta", "0.2", "--seed", "0", "--out", str(tmp_path / "bb"),
             "--trajectory"])
        for csv in tmp_path.rglob("*.csv"):
            data = np.loadtxt(csv, delimiter=",", skiprows=1, ndmin=2)
            assert np.isfinite(data).all()
        for manifest in tmp_path.rglob("*manifest*.json"):
            parsed = json.loads(manifest.read_text())
            assert {"command", "config", "seed", "outputs", "duration_s"} <= set(parsed)
        parsed = backbone.read_pdb(str(tmp_path / "bb.pdb"))
        assert len(parsed) == 3

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from cgsde.cli import main as cli_main
from cgsde.experiments import (
    EXPERIMENTS,
    Check,
    ConfigError,
    coerce_params,
    config_hash,
    fmt17,
    run_experiment,
)


def read_verdict(out):
    return json.loads((Path(out) / "verdict.json").read_text())


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


SMALL_FAN = {"n_paths": 10, "n_out": 41}


class TestPlumbing:
    def test_fmt17_roundtrip(self):
        for x in (1 / 3, np.pi, 1e-17, 123456.789):
            assert float(fmt17(x)) == x

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="unknown experiment"):
            run_experiment("nope", {}, "/tmp/x")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown parameter"):
            coerce_params(EXPERIMENTS["gyongy-fan"], {"bogus": 1})

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="bad value"):
            coerce_params(EXPERIMENTS["gyongy-fan"], {"n_paths": "ten"})

    def test_config_hash_canonical(self):
        a = config_hash({"b": 1, "a": 2.0})
        b = config_hash({"a": 2.0, "b": 1})
        assert a == b

    def test_check_kinds(self):
        assert Check("x", "within", 1.0, 1.05, 0.1).passed
        assert not Check("x", "within", 1.0, 1.2, 0.1).passed
        assert Check("x", "at_least", 2.0, 1.7).passed
        assert Check("x", "at_most", 1.0, 1.0).passed


class TestCli:
    def test_exit_codes(self, tmp_path):
        assert cli_main(["gyongy-fan", "--out", str(tmp_path / "a"),
                         *sum([["--" + k, str(v)] for k, v in SMALL_FAN.items()], [])]) == 0
        assert cli_main(["gyongy-fan", "--bogus", "1", "--out", str(tmp_path / "b")]) == 2
        assert cli_main(["nope", "--out", str(tmp_path / "c")]) == 2
        assert cli_main(["gyongy-fan"]) == 2                       # missing --out
        assert cli_main(["gyongy-moments", "--s0xx", "0",
                         "--out", str(tmp_path / "d")]) == 2       # singular init

    def test_config_file_and_overrides(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("n_paths = 10\n# comment\nn_out = 41\n")
        out = tmp_path / "out"
        assert cli_main(["gyongy-fan", "--config", str(cfgfile),
                         "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["params"]["n_out"] == 41

    def test_manifest_reruns_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        args = ["eps-sweep", "--family", "noisy-slow", "--pathwise_particles", "8",
                "--pathwise_t", "2.0", "--pathwise_dt", "0.01"]
        assert cli_main(args + ["--out", str(out1)]) in (0, 1)
        assert cli_main(["eps-sweep", "--config", str(out1 / "manifest.json"),
                         "--out", str(out2)]) in (0, 1)
        for name in ("sweep.csv", "pathwise.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_manifest_experiment_mismatch(self, tmp_path):
        out = tmp_path / "m"
        cli_main(["gyongy-fan", "--out", str(out),
                  *sum([["--" + k, str(v)] for k, v in SMALL_FAN.items()], [])])
        assert cli_main(["eps-sweep", "--config", str(out / "manifest.json"),
                         "--out", str(tmp_path / "n")]) == 2


class TestVerdictContents:
    def test_checks_carry_numbers(self, tmp_path):
        out = tmp_path / "fan"
        run_experiment("gyongy-fan", SMALL_FAN, out)
        v = read_verdict(out)
        assert v["all_pass"] is True
        for c in v["checks"]:
            assert {"name", "kind", "pass", "value", "target", "band"} <= set(c)
            assert isinstance(c["value"], float)

    def test_manifest_contents(self, tmp_path):
        out = tmp_path / "fan"
        run_experiment("gyongy-fan", SMALL_FAN, out)
        m = json.loads((out / "manifest.json").read_text())
        assert m["experiment"] == "gyongy-fan"
        assert set(m["versions"]) >= {"cgsde", "numpy", "scipy", "python"}
        assert m["config_hash"] == config_hash(m["params"])


class TestFanExperiment:
    def test_projected_paths_exactly_constant(self, tmp_path):
        out = tmp_path / "fan"
        run_experiment("gyongy-fan", SMALL_FAN, out)
        header, rows = read_csv(out / "fan_small.csv")
        pcols = [i for i, h in enumerate(header) if h.startswith("p")]
        data = np.array(rows, dtype=float)
        for i in pcols:
            assert np.all(data[:, i] == data[0, i])

    def test_spread_moves_toward_stationary(self, tmp_path):
        out = tmp_path / "fan"
        run_experiment("gyongy-fan", SMALL_FAN, out)
        for label, direction in (("small", 1), ("large", -1)):
            header, rows = read_csv(out / f"fan_{label}.csv")
            gcols = [i for i, h in enumerate(header) if h.startswith("g")]
            data = np.array(rows, dtype=float)
            v0 = data[0, gcols].var(ddof=1)
            v1 = data[-1, gcols].var(ddof=1)
            assert direction * (v1 - v0) > 0


class TestMomentExperiments:
    def test_initial_row_is_initial_data(self, tmp_path):
        out = tmp_path / "mom"
        rc = run_experiment("gyongy-moments", {"n_particles": 5000, "n_out": 21}, out)
        assert rc == 0
        header, rows = read_csv(out / "moments.csv")
        first = dict(zip(header, map(float, rows[0])))
        assert first["t"] == 0.0
        assert first["mean_exact"] == -1.0
        assert first["var_exact"] == 0.1

    def test_small_ensemble_override_passes(self, tmp_path):
        rc = run_experiment("gyongy-moments", {"n_particles": 1000}, tmp_path / "m2")
        assert rc == 0

    def test_longtime_eval_t_override_targets_time_t_law(self, tmp_path):
        out = tmp_path / "lt"
        run_experiment("gyongy-longtime", {"n_particles": 20000, "eval_t": 1.0}, out)
        header, rows = read_csv(out / "moments.csv")
        row = dict(zip(header, map(float, rows[0])))
        # at t = 1 the target is the time-t variance, well below stationary 0.5
        assert row["var_exact"] < 0.45
        from cgsde.linear_gaussian import ou_moments
        from cgsde.systems import tracking_linear
        g = ou_moments(tracking_linear(1.0, 0.0), [-1.0, 5.0],
                       np.diag([0.1, 1.0]), 1.0)
        assert abs(row["var_exact"] - g.cov[0, 0]) < 1e-12

    def test_longtime_seed_invariant_verdict(self, tmp_path):
        for seed in (7, 8):
            rc = run_experiment("gyongy-longtime",
                                {"n_particles": 20000, "seed": seed},
                                tmp_path / f"s{seed}")
            assert rc == 0

    def test_histogram_normalization(self, tmp_path):
        out = tmp_path / "hist"
        run_experiment("gyongy-longtime", {"n_particles": 20000}, out)
        header, rows = read_csv(out / "histogram.csv")
        data = np.array(rows, dtype=float)
        widths = data[:, 1] - data[:, 0]
        assert abs(np.sum(data[:, 3] * widths) - 1.0) < 1e-12


class TestSweepExperiment:
    def test_single_eps_slope_not_applicable(self, tmp_path):
        out = tmp_path / "one"
        rc = run_experiment("eps-sweep",
                            {"family": "deterministic-slow", "eps_list": "0.05"}, out)
        assert rc == 0
        slope = json.loads((out / "slope.json").read_text())["slope"]
        assert slope is None
        header, rows = read_csv(out / "sweep.csv")
        assert len(rows) == 1

    def test_invalid_family(self, tmp_path):
        with pytest.raises(ConfigError, match="family"):
            run_experiment("eps-sweep", {"family": "unknown"}, tmp_path / "x")

    def test_invalid_eps(self, tmp_path):
        with pytest.raises(ConfigError, match="eps_list"):
            run_experiment("eps-sweep", {"eps_list": "0.5,2.0"}, tmp_path / "x")


class TestProp41Experiment:
    def test_invalid_example(self, tmp_path):
        with pytest.raises(ConfigError, match="example"):
            run_experiment("frozen-vs-conditional", {"example": "spiral"}, tmp_path / "x")

    def test_residuals_csv_schema(self, tmp_path):
        out = tmp_path / "p41"
        rc = run_experiment("frozen-vs-conditional",
                            {"example": "gradient", "nx": 101, "ny": 101}, out)
        assert rc == 0
        header, rows = read_csv(out / "residuals.csv")
        assert header == ["part", "norm", "fine", "coarse_2h"]
        parts = {r[0] for r in rows}
        assert parts == {"slow", "cross", "fast", "slow_plus_cross", "full"}

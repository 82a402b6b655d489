import dataclasses
import json
import os

import numpy as np
import pytest

from biggins import OffspringModel, parse_config, run, serialize_config
from biggins.cli import RunConfig, config_hash, main
from biggins.errors import ParseError, ValidationError

MINIMAL = """
[run]
experiment = clt-cov

[model]
kind = BinaryGaussian
tau2 = 0.25
"""

GW_MODEL = """
[model]
kind = GaltonWatsonEmbedding
gw_pmf = 0:0,1:0.5,2:0.5
"""


class TestParse:
    def test_minimal_valid(self):
        cfg = parse_config(MINIMAL)
        assert cfg.experiment == "clt-cov"
        assert cfg.model == OffspringModel.binary_gaussian(0.25)
        assert cfg.seed == 0 and cfg.workers == 1

    def test_duplicate_key_is_parse_error(self):
        text = MINIMAL.replace("tau2 = 0.25", "tau2 = 0.25\ntau2 = 0.3")
        with pytest.raises(ParseError):
            parse_config(text)

    def test_unknown_run_key_rejected(self):
        text = MINIMAL.replace("experiment = clt-cov",
                               "experiment = clt-cov\nbogus = 1")
        with pytest.raises(ValidationError):
            parse_config(text)

    def test_unknown_section_rejected(self):
        with pytest.raises(ValidationError):
            parse_config(MINIMAL + "\n[extra]\nx = 1\n")

    def test_hot_model_fails_check_ii(self):
        text = MINIMAL.replace("tau2 = 0.25", "tau2 = 0.8")
        with pytest.raises(ValidationError, match=r"\(ii\)|m\(2\)"):
            parse_config(text)

    def test_hot_model_fine_for_conditions(self):
        text = MINIMAL.replace("tau2 = 0.25", "tau2 = 0.8") \
            .replace("experiment = clt-cov", "experiment = conditions")
        cfg = parse_config(text)
        assert cfg.experiment == "conditions"

    def test_case_sensitive_keys(self):
        text = """
[run]
experiment = lil
n = 3
N = 17
M = 55
r = 2
R = 6
""" + GW_MODEL
        cfg = parse_config(text)
        assert (cfg.n, cfg.N, cfg.M, cfg.r, cfg.R) == (3, 17, 55, 2, 6)

    def test_comments_and_lists(self):
        text = """
[run]
experiment = renewal   # inline comment
x_grid = 10.0,100.0
levels = 2,4,8
band = 0.1,3.0
""" + GW_MODEL
        cfg = parse_config(text)
        assert cfg.x_grid == (10.0, 100.0)
        assert cfg.levels == (2, 4, 8)
        assert cfg.band == (0.1, 3.0)

    def test_invalid_value_type(self):
        text = MINIMAL.replace("experiment = clt-cov",
                               "experiment = clt-cov\nM = lots")
        with pytest.raises(ValidationError):
            parse_config(text)

    def test_nonpositive_count_rejected(self):
        text = MINIMAL.replace("experiment = clt-cov",
                               "experiment = clt-cov\nM = 0")
        with pytest.raises(ValidationError):
            parse_config(text)


class TestRoundTrip:
    @pytest.mark.parametrize("extra", [
        {},
        {"seed": 77, "workers": 3, "n": 5, "d": 2},
        {"x_grid": (3.0, 9.0), "measure": "second_tilt"},
        {"levels": (2, 6), "band": (0.25, 1.75), "R": 9},
    ])
    def test_parse_serialize_identity(self, extra):
        cfg = RunConfig(experiment="clt-cov",
                        model=OffspringModel.galton_watson([0, .5, .5]),
                        **extra)
        again = parse_config(serialize_config(cfg))
        assert again == cfg

    def test_hash_ignores_execution_keys(self):
        base = RunConfig(experiment="moments",
                         model=OffspringModel.binary_gaussian(0.25))
        h0 = config_hash(base)
        assert config_hash(dataclasses.replace(base, workers=8)) == h0
        assert config_hash(dataclasses.replace(base, out="/tmp/x")) == h0
        assert config_hash(dataclasses.replace(base, seed=1)) != h0


class TestRun:
    def test_moments_experiment_no_simulation(self):
        cfg = parse_config("[run]\nexperiment = moments\n" + GW_MODEL)
        rep = run(cfg)
        assert rep.passed
        ms = rep.statistics["moment_set"]
        assert ms["m2"] == pytest.approx(2 / 3, rel=1e-12)
        assert ms["v2"] == pytest.approx(1 / 3, rel=1e-12)
        payload = json.loads(rep.to_json())
        assert payload["schema"] == 1

    def test_conditions_failing_model_exits_nonzero(self, tmp_path):
        path = tmp_path / "hot.ini"
        path.write_text("[run]\nexperiment = conditions\n\n[model]\n"
                        "kind = BinaryGaussian\ntau2 = 0.8\n")
        rc = main(["conditions", "--config", str(path)])
        assert rc == 1  # statistical/check failure

    def test_missing_config_file(self):
        assert main(["moments", "--config", "/nonexistent.ini"]) == 2

    def test_bad_config_exit_code(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[run]\nexperiment = clt-cov\nM = -2\n" + GW_MODEL)
        assert main(["clt-cov", "--config", str(path)]) == 2

    def test_simulate_small(self):
        cfg = parse_config("[run]\nexperiment = simulate\nM = 400\nN = 6\n"
                           "seed = 5\n" + GW_MODEL)
        rep = run(cfg)
        assert rep.passed
        assert rep.statistics["survival_fraction"] == 1.0

    def test_simulate_writes_trajectory_csv(self, tmp_path):
        out = tmp_path / "sim"
        cfg = parse_config("[run]\nexperiment = simulate\nM = 5\nN = 4\n"
                           f"seed = 5\nout = {out}\n" + GW_MODEL)
        rep = run(cfg)
        csv_files = [f for f in rep.raw_files if "trajectories" in f]
        assert len(csv_files) == 1
        lines = open(csv_files[0]).read().strip().split("\n")
        assert lines[1] == "tree,n,W1,W2,pop,sup_weight"
        assert len(lines) == 2 + 5 * 5  # header lines + M * (N + 1) rows

    def test_same_config_reruns_identically(self):
        cfg = parse_config("[run]\nexperiment = clt-cov\nM = 1200\nn = 3\n"
                           "d = 2\nseed = 9\n" + GW_MODEL)
        a, b = run(cfg), run(cfg)
        assert a.statistics == b.statistics
        assert a.config_hash == b.config_hash

    def test_workers_do_not_change_statistics(self):
        base = parse_config("[run]\nexperiment = clt-cov\nM = 1500\nn = 3\n"
                            "d = 2\nseed = 10\n" + GW_MODEL)
        seq = run(base)
        par = run(dataclasses.replace(base, workers=4))
        assert seq.statistics == par.statistics

    def test_report_persisted_with_hash(self, tmp_path):
        out = tmp_path / "outdir"
        cfg = parse_config("[run]\nexperiment = moments\nout = %s\n%s"
                           % (out, GW_MODEL))
        rep = run(cfg)
        saved = json.loads((out / "report.json").read_text())
        assert saved["config_hash"] == rep.config_hash
        assert saved["statistics"] == json.loads(rep.to_json())["statistics"]

    def test_clt_cov_writes_tail_matrix(self, tmp_path):
        out = tmp_path / "cov"
        cfg = parse_config("[run]\nexperiment = clt-cov\nM = 1000\nn = 3\n"
                           f"d = 2\nseed = 9\nout = {out}\n" + GW_MODEL)
        rep = run(cfg)
        files = [f for f in rep.raw_files if "tail_matrix" in f]
        assert len(files) == 1
        lines = open(files[0]).read().strip().split("\n")
        assert lines[1] == "r0,r1,w2,survived"
        assert len(lines) == 2 + 1000

    def test_renewal_csv_has_ratio_column(self, tmp_path):
        out = tmp_path / "ren"
        text = ("[run]\nexperiment = renewal\npaths = 500\nn_max = 40\n"
                f"lattice_indices = 16,18,20\nrel_tol = 0.05\nout = {out}\n"
                + GW_MODEL)
        rep = run(parse_config(text))
        assert rep.passed
        files = [f for f in rep.raw_files if "renewal" in f]
        lines = open(files[0]).read().strip().split("\n")
        assert lines[1] == "x,v_hat,stderr,ratio_to_asymptote,last_term"
        last_ratio = float(lines[-1].split(",")[3])
        assert abs(last_ratio - 1.0) <= 0.05

    def test_lil_experiment_writes_scans(self, tmp_path):
        out = tmp_path / "lil"
        text = ("[run]\nexperiment = lil\ntrees = 60\nN = 12\nR = 6\n"
                f"seed = 3\nout = {out}\n" + GW_MODEL)
        cfg = parse_config(text)
        rep = run(cfg)
        assert rep.statistics["frac_monotone"] == 1.0
        assert len(rep.raw_files) == 60
        assert os.path.exists(rep.raw_files[0])

    def test_tail_integral_lattice_branch(self):
        cfg = parse_config("[run]\nexperiment = tail-integral\n"
                           "paths = 300\nn_max = 200\nmeasure = second_tilt\n"
                           "lattice_indices = 4,8\nseed = 6\n" + GW_MODEL)
        rep = run(cfg)
        # deterministic walk: the lattice tail sums are exact
        assert rep.passed
        assert max(abs(e) for e in rep.statistics["rel_error"]) < 1e-9

    def test_population_cap_exit_code(self, tmp_path):
        path = tmp_path / "cap.ini"
        path.write_text("[run]\nexperiment = simulate\nM = 3\nN = 12\n"
                        "pop_cap = 16\n\n[model]\nkind = BinaryGaussian\n"
                        "tau2 = 0.25\n")
        assert main(["simulate", "--config", str(path)]) == 3

    def test_cli_overrides_and_env(self, tmp_path, monkeypatch):
        path = tmp_path / "m.ini"
        path.write_text("[run]\nexperiment = moments\nseed = 1\n" + GW_MODEL)
        monkeypatch.setenv("BIGGINS_SEED", "7")
        rc = main(["moments", "--config", str(path)])
        assert rc == 0

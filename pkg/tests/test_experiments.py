"""Config parsing, experiment runners, output files, and the CLI."""

import json

import numpy as np
import pytest

from deepmatch.cli import main
from deepmatch.experiments import (
    ConfigError,
    GradcheckRun,
    PropensityRun,
    StageError,
    SwissRollRun,
    parse_gradcheck,
    parse_propensity,
    parse_swissroll,
    prepare_out_dir,
    resolved_gradcheck,
    resolved_propensity,
    resolved_swissroll,
    run_gradcheck,
    run_propensity,
    run_swissroll,
)
from deepmatch.metrics import REFERENCE_MISASSIGNMENT

SR_SMALL = {
    "version": 1,
    "experiment": "swissroll",
    "dataset": {"n": 120},
    "autoencoder": {"epochs": 20},
}

PS_SMALL = {
    "version": 1,
    "experiment": "propensity",
    "dataset": {"n_pairs": 60},
    "net": {"batch_size": 16},
}


class TestParseSwissroll:
    def test_empty_doc_gives_defaults(self):
        assert parse_swissroll({}) == SwissRollRun()

    def test_seed_override_flows_into_dataset(self):
        cfg = parse_swissroll({"seed": 3}, seed_override=7)
        assert cfg.seed == 7
        assert cfg.dataset.seed == 7

    def test_unknown_keys_rejected_at_each_level(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_swissroll({"bogus": 1})
        with pytest.raises(ConfigError, match="config.dataset"):
            parse_swissroll({"dataset": {"jitter": 1}})
        with pytest.raises(ConfigError, match="config.autoencoder"):
            parse_swissroll({"autoencoder": {"lr": 0.1}})
        with pytest.raises(ConfigError, match="config.lle"):
            parse_swissroll({"lle": {"neighbours": 5}})

    def test_version_mismatch_rejected(self):
        with pytest.raises(ConfigError, match="version"):
            parse_swissroll({"version": 2})

    def test_experiment_mismatch_rejected(self):
        with pytest.raises(ConfigError, match="swissroll"):
            parse_swissroll({"experiment": "propensity"})

    def test_bool_rejected_where_int_expected(self):
        with pytest.raises(ConfigError, match="seed"):
            parse_swissroll({"seed": True})

    def test_methods_subset_kept_in_order(self):
        cfg = parse_swissroll({"methods": ["pca", "raw_knn"]})
        assert cfg.methods == ("pca", "raw_knn")

    def test_methods_validation(self):
        with pytest.raises(ConfigError, match="unknown method"):
            parse_swissroll({"methods": ["umap"]})
        with pytest.raises(ConfigError, match="duplicate"):
            parse_swissroll({"methods": ["pca", "pca"]})
        with pytest.raises(ConfigError, match="non-empty"):
            parse_swissroll({"methods": []})

    def test_test_fraction_bounds(self):
        with pytest.raises(ConfigError, match="test_fraction"):
            parse_swissroll({"test_fraction": 0.0})
        with pytest.raises(ConfigError, match="test_fraction"):
            parse_swissroll({"test_fraction": 1.0})

    def test_hidden_must_be_positive_ints(self):
        with pytest.raises(ConfigError, match="hidden"):
            parse_swissroll({"autoencoder": {"hidden": [4, -1]}})
        with pytest.raises(ConfigError, match="hidden"):
            parse_swissroll({"autoencoder": {"hidden": [4, True]}})

    def test_resolved_config_reparses_identically(self):
        cfg = parse_swissroll(
            {
                "seed": 5,
                "dataset": {"n": 200, "noise_sigma": 0.1, "coeff_treated": [3, 1, 1]},
                "methods": ["lle", "pca"],
                "embed_dim": 2,
                "twin_mode": True,
                "autoencoder": {"epochs": 50, "hidden": [6]},
                "lle": {"k_neighbors": 8, "reg": 1e-2},
            }
        )
        assert parse_swissroll(resolved_swissroll(cfg)) == cfg

    def test_non_mapping_rejected(self):
        with pytest.raises(ConfigError, match="JSON object"):
            parse_swissroll([1, 2])


class TestParsePropensity:
    def test_empty_doc_gives_defaults(self):
        assert parse_propensity({}) == PropensityRun()

    def test_resolved_config_reparses_identically(self):
        cfg = parse_propensity(
            {
                "seed": 2,
                "dataset": {"n_pairs": 80, "jitter_sigma": 0.05},
                "methods": ["logistic"],
                "include_outcome": True,
                "query_arm": 0,
                "threshold": 0.4,
                "net": {"epochs": 3, "batch_size": 64},
                "logistic": {"l2": 0.1, "max_iter": 500, "grad_tol": 1e-6},
            }
        )
        assert parse_propensity(resolved_propensity(cfg)) == cfg

    def test_query_arm_validated(self):
        with pytest.raises(ConfigError, match="query_arm"):
            parse_propensity({"query_arm": 2})

    def test_threshold_bounds(self):
        with pytest.raises(ConfigError, match="threshold"):
            parse_propensity({"threshold": 1.0})

    def test_unknown_nested_keys_rejected(self):
        with pytest.raises(ConfigError, match="config.net"):
            parse_propensity({"net": {"lr": 0.1}})
        with pytest.raises(ConfigError, match="config.logistic"):
            parse_propensity({"logistic": {"penalty": "l1"}})

    def test_n_pairs_minimum(self):
        with pytest.raises(ConfigError, match="n_pairs"):
            parse_propensity({"dataset": {"n_pairs": 1}})


class TestParseGradcheck:
    def test_empty_doc_gives_defaults(self):
        assert parse_gradcheck({}) == GradcheckRun()

    def test_resolved_config_reparses_identically(self):
        cfg = parse_gradcheck({"seed": 4, "count": 6, "step": 1e-6, "tolerance": 1e-3})
        assert parse_gradcheck(resolved_gradcheck(cfg)) == cfg

    def test_positivity_validated(self):
        with pytest.raises(ConfigError, match="step"):
            parse_gradcheck({"step": 0.0})
        with pytest.raises(ConfigError, match="tolerance"):
            parse_gradcheck({"tolerance": -1.0})
        with pytest.raises(ConfigError, match="count"):
            parse_gradcheck({"count": 0})

    def test_corrupt_must_be_bool(self):
        with pytest.raises(ConfigError, match="corrupt"):
            parse_gradcheck({"corrupt": 1})


class TestPrepareOutDir:
    def test_creates_nested_directories(self, tmp_path):
        out = prepare_out_dir(tmp_path / "a" / "b")
        assert out.is_dir()

    def test_empty_existing_dir_accepted(self, tmp_path):
        assert prepare_out_dir(tmp_path) == tmp_path

    def test_non_empty_requires_force(self, tmp_path):
        (tmp_path / "old.txt").write_text("x")
        with pytest.raises(ConfigError, match="force"):
            prepare_out_dir(tmp_path)
        assert prepare_out_dir(tmp_path, force=True) == tmp_path

    def test_file_path_rejected(self, tmp_path):
        target = tmp_path / "plain.txt"
        target.write_text("x")
        with pytest.raises(ConfigError, match="not a directory"):
            prepare_out_dir(target)


class TestRunSwissroll:
    def test_output_contract(self, tmp_path):
        cfg = parse_swissroll(SR_SMALL)
        reports = run_swissroll(cfg, tmp_path / "out")
        assert [r.method for r in reports] == list(cfg.methods)

        out = tmp_path / "out"
        for method in cfg.methods:
            assert (out / f"embedding_{method}.csv").exists()
        payload = json.loads((out / "reports.json").read_text())
        assert payload["experiment"] == "swissroll"
        assert payload["seed"] == 0
        assert len(payload["reports"]) == 4
        for entry in payload["reports"]:
            assert set(entry) == {"method", "mean_abs_ite_error", "ate_error", "n_test", "seed"}

        pca_lines = (out / "embedding_pca.csv").read_text().splitlines()
        assert pca_lines[0] == "index,split,group,w,z1,z2"
        assert len(pca_lines) == 121
        raw_header = (out / "embedding_raw_knn.csv").read_text().splitlines()[0]
        assert raw_header.endswith("z1,z2,z3")

        comparison = (out / "comparison.csv").read_text().splitlines()
        assert comparison[0] == "method,mean_abs_ite_error,ate_error,n_test,seed"
        assert len(comparison) == 5

        resolved = json.loads((out / "resolved_config.json").read_text())
        assert parse_swissroll(resolved) == cfg

    def test_methods_filtering(self, tmp_path):
        cfg = parse_swissroll({"dataset": {"n": 100}, "methods": ["pca"]})
        reports = run_swissroll(cfg, tmp_path / "out")
        assert len(reports) == 1 and reports[0].method == "pca"
        out = tmp_path / "out"
        assert (out / "embedding_pca.csv").exists()
        assert not (out / "embedding_lle.csv").exists()
        assert not (out / "embedding_autoencoder.csv").exists()

    def test_twin_mode_recovers_effects_exactly(self, tmp_path):
        cfg = parse_swissroll(
            {
                "dataset": {"n": 150},
                "twin_mode": True,
                "autoencoder": {"epochs": 60},
            }
        )
        reports = run_swissroll(cfg, tmp_path / "out")
        assert len(reports) == 4
        for r in reports:
            assert r.mean_abs_ite_error == 0.0
            assert r.ate_error == 0.0
            assert r.n_test == 300

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = parse_swissroll({"dataset": {"n": 100}, "methods": ["raw_knn", "pca"]})
        run_swissroll(cfg, tmp_path / "one")
        run_swissroll(cfg, tmp_path / "two")
        for name in ("reports.json", "comparison.csv", "embedding_pca.csv"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_stage_error_names_failing_stage(self, tmp_path):
        cfg = parse_swissroll(
            {"dataset": {"n": 100}, "methods": ["lle"], "lle": {"k_neighbors": 200}}
        )
        with pytest.raises(StageError, match="fit:lle"):
            run_swissroll(cfg, tmp_path / "out")

    def test_refuses_non_empty_out_dir(self, tmp_path):
        (tmp_path / "stale.txt").write_text("x")
        with pytest.raises(ConfigError, match="not empty"):
            run_swissroll(parse_swissroll({"dataset": {"n": 100}, "methods": ["pca"]}), tmp_path)


class TestRunPropensity:
    def test_output_contract(self, tmp_path):
        cfg = parse_propensity(PS_SMALL)
        reports = run_propensity(cfg, tmp_path / "out")
        assert [r.method for r in reports] == ["logistic", "propensity_net"]

        out = tmp_path / "out"
        comparison = (out / "comparison.csv").read_text().splitlines()
        assert comparison[0] == (
            "method,Mean absolute misclassification error(%),"
            "Number of mis-assignments (%),Accuracy(%)"
        )
        assert len(comparison) == 3

        for method in cfg.methods:
            lines = (out / f"matched_pairs_{method}.csv").read_text().splitlines()
            assert lines[0] == (
                "query_index,score,x1,x2,y_obs,matched_index,matched_score,pair_index"
            )
            assert len(lines) == 61  # one row per treated query

        payload = json.loads((out / "reports.json").read_text())
        assert payload["experiment"] == "propensity"
        reference = payload["reference"]
        assert reference["logistic"]["Accuracy(%)"] == REFERENCE_MISASSIGNMENT["logistic"][2]
        assert (
            reference["propensity_net"]["Number of mis-assignments (%)"]
            == REFERENCE_MISASSIGNMENT["propensity_net"][1]
        )

        resolved = json.loads((out / "resolved_config.json").read_text())
        assert parse_propensity(resolved) == cfg

    def test_reports_within_percent_range(self, tmp_path):
        reports = run_propensity(parse_propensity(PS_SMALL), tmp_path / "out")
        for r in reports:
            for value in (
                r.mean_abs_misassignment_error_pct,
                r.misassignment_rate_pct,
                r.accuracy_pct,
            ):
                assert 0.0 <= value <= 100.0

    def test_include_outcome_adds_feature(self, tmp_path):
        doc = dict(PS_SMALL, include_outcome=True)
        cfg = parse_propensity(doc)
        run_propensity(cfg, tmp_path / "out")
        resolved = json.loads((tmp_path / "out" / "resolved_config.json").read_text())
        assert resolved["include_outcome"] is True

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = parse_propensity(PS_SMALL)
        run_propensity(cfg, tmp_path / "one")
        run_propensity(cfg, tmp_path / "two")
        assert (tmp_path / "one" / "reports.json").read_bytes() == (
            tmp_path / "two" / "reports.json"
        ).read_bytes()

    def test_stage_error_names_failing_stage(self, tmp_path):
        doc = dict(PS_SMALL, logistic={"max_iter": 1})
        with pytest.raises(StageError, match="fit:logistic"):
            run_propensity(parse_propensity(doc), tmp_path / "out")


class TestRunGradcheck:
    def test_default_grid_passes(self, tmp_path):
        results, all_pass = run_gradcheck(parse_gradcheck({"count": 6}), tmp_path / "out")
        assert all_pass is True
        assert len(results) == 6
        names = [r["name"] for r in results]
        assert len(set(names)) == 6
        for r in results:
            assert r["pass"] is True
            assert r["max_relative_error"] < 1e-4

        out = tmp_path / "out"
        payload = json.loads((out / "reports.json").read_text())
        assert set(payload) == {"experiment", "seed", "tolerance", "all_pass", "cases"}
        assert payload["all_pass"] is True
        assert len((out / "comparison.csv").read_text().splitlines()) == 7

    def test_corrupt_gradient_fails(self, tmp_path):
        results, all_pass = run_gradcheck(
            parse_gradcheck({"count": 3, "corrupt": True}), tmp_path / "out"
        )
        assert all_pass is False
        assert any(not r["pass"] for r in results)


class TestCli:
    def write_config(self, tmp_path, doc):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(doc))
        return str(path)

    def test_gradcheck_success_exit_0(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, {"experiment": "gradcheck", "count": 6})
        rc = main(["gradcheck", "--config", cfg, "--out", str(tmp_path / "out")])
        captured = capsys.readouterr()
        assert rc == 0
        assert "6/6 cases passed" in captured.out
        assert "wrote" in captured.out

    def test_corrupt_gradcheck_exit_2(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, {"experiment": "gradcheck", "count": 3, "corrupt": True})
        rc = main(["gradcheck", "--config", cfg, "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "failed" in capsys.readouterr().err

    def test_unknown_config_key_exit_1(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, {"bogus": 1})
        rc = main(["swissroll", "--config", cfg, "--out", str(tmp_path / "out")])
        assert rc == 1
        assert "bogus" in capsys.readouterr().err

    def test_malformed_json_exit_1(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        rc = main(["propensity", "--config", str(path), "--out", str(tmp_path / "out")])
        assert rc == 1
        assert "not valid JSON" in capsys.readouterr().err

    def test_missing_config_file_exit_1(self, tmp_path, capsys):
        rc = main(
            ["gradcheck", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "out")]
        )
        assert rc == 1
        assert "cannot read" in capsys.readouterr().err

    def test_bad_arguments_exit_1(self, tmp_path, capsys):
        assert main(["swissroll"]) == 1  # missing --out
        assert main([]) == 1  # missing subcommand
        capsys.readouterr()

    def test_help_exit_0(self, capsys):
        assert main(["--help"]) == 0
        assert "swissroll" in capsys.readouterr().out

    def test_swissroll_run_prints_report_lines(self, tmp_path, capsys):
        cfg = self.write_config(
            tmp_path, {"experiment": "swissroll", "dataset": {"n": 100}, "methods": ["pca"]}
        )
        out = tmp_path / "out"
        rc = main(["swissroll", "--config", cfg, "--out", str(out)])
        captured = capsys.readouterr()
        assert rc == 0
        assert "swissroll seed=0 pca:" in captured.out
        assert (out / "reports.json").exists()

    def test_propensity_run_prints_report_lines(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, PS_SMALL)
        rc = main(["propensity", "--config", cfg, "--out", str(tmp_path / "out")])
        captured = capsys.readouterr()
        assert rc == 0
        assert "propensity seed=0 logistic:" in captured.out
        assert "propensity seed=0 propensity_net:" in captured.out

    def test_force_flag_allows_rerun(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, {"experiment": "gradcheck", "count": 2})
        out = str(tmp_path / "out")
        assert main(["gradcheck", "--config", cfg, "--out", out]) == 0
        assert main(["gradcheck", "--config", cfg, "--out", out]) == 1
        assert main(["gradcheck", "--config", cfg, "--out", out, "--force"]) == 0
        capsys.readouterr()

    def test_seed_flag_overrides_config(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, {"experiment": "gradcheck", "count": 2, "seed": 1})
        out = tmp_path / "out"
        rc = main(["gradcheck", "--config", cfg, "--out", str(out), "--seed", "9"])
        capsys.readouterr()
        assert rc == 0
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["seed"] == 9

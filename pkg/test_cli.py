import json

import numpy as np
import pandas as pd
import pytest

from riskalloc import main as cli
from riskalloc.errors import ConvergenceError

FGM_MODEL = {"kind": "fgm_exponential", "beta1": 0.05, "beta2": 0.25, "theta": 0.0}


def _run(tmp_path, command, config, *extra):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config))
    out = tmp_path / f"{command}.csv"
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    report = pd.read_csv(out) if out.exists() else None
    return code, report


class TestSolve:

    def test_closed_form(self, tmp_path):
        code, report = _run(tmp_path, "solve", {"model": FGM_MODEL, "capital": 50})
        assert code == cli.EXIT_OK
        assert list(report.columns) == ["method", "u_1", "u_2", "alpha_1", "alpha_2", "residual_norm"]
        assert report["alpha_1"].iloc[0] == pytest.approx(0.769149, abs=2e-6)
        assert report["u_1"].iloc[0] + report["u_2"].iloc[0] == pytest.approx(50.0)

    def test_comonotonic(self, tmp_path):
        model = {"kind": "comonotonic", "marginals": [{"family": "exponential", "rate": 0.05},
                                                       {"family": "exponential", "rate": 0.25}]}
        code, report = _run(tmp_path, "solve", {"model": model, "capital": 50})
        assert code == cli.EXIT_OK
        np.testing.assert_allclose(report[["u_1", "u_2"]].iloc[0], [125 / 3, 25 / 3], rtol=1e-9)

    def test_both_methods_report_gap(self, tmp_path):
        config = {"model": FGM_MODEL, "capital": 50, "method": "both",
                  "mirror": {"batch": 500, "iterations": 20}}
        code, report = _run(tmp_path, "solve", config)
        assert code == cli.EXIT_OK
        assert list(report["method"]) == ["closed_form", "monte_carlo"]
        assert "oracle_gap" in report.columns
        assert np.isnan(report["residual_norm"].iloc[1])

    def test_output_from_config(self, tmp_path):
        out = tmp_path / "configured.csv"
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"model": FGM_MODEL, "capital": 50, "output": str(out)}))
        assert cli.main(["solve", "--config", str(path)]) == cli.EXIT_OK
        assert out.exists()

    def test_solver_failure(self, tmp_path, monkeypatch):
        def fail(system, config):
            raise ConvergenceError("no luck", [0.5, 0.5], 1.0)

        monkeypatch.setattr(cli, "solve_simplex_detailed", fail)
        code, report = _run(tmp_path, "solve", {"model": FGM_MODEL, "capital": 50})
        assert code == cli.EXIT_SOLVER
        assert report is None


class TestConfigErrors:

    def test_missing_file(self, tmp_path):
        assert cli.main(["solve", "--config", str(tmp_path / "absent.json")]) == cli.EXIT_CONFIG

    @pytest.mark.parametrize("config", [
        {"model": {"kind": "gaussian"}, "capital": 50},
        {"model": {"kind": "fgm_exponential", "beta1": 0.2, "beta2": 0.25}, "capital": 50},
        {"model": FGM_MODEL, "capital": 50, "penalty": {"kind": "power", "p": 2}},
        {"model": {"kind": "independent_pareto", "shape": 2, "scales": [1, 2]}, "capital": 50},
        {"model": FGM_MODEL, "capital": 50, "indicator": "I_loc", "method": "monte_carlo",
         "mirror": {"momentum": 0.9}},
    ])
    def test_rejected(self, tmp_path, config):
        code, _ = _run(tmp_path, "solve", config)
        assert code == cli.EXIT_CONFIG

    def test_bad_sample_override(self, tmp_path):
        code, _ = _run(tmp_path, "estimate", {"model": FGM_MODEL, "capital": 50}, "--samples", "0")
        assert code == cli.EXIT_CONFIG

    def test_sweep_without_parameter(self, tmp_path):
        code, _ = _run(tmp_path, "sweep", {"model": FGM_MODEL, "capital": 50, "sweep": {"grid": [0]}})
        assert code == cli.EXIT_CONFIG


class TestSweep:

    def test_theta(self, tmp_path):
        config = {"model": FGM_MODEL, "capital": 60,
                  "sweep": {"parameter": "theta", "start": -1, "stop": 1, "step": 1}}
        code, report = _run(tmp_path, "sweep", config)
        assert code == cli.EXIT_OK
        assert list(report.columns) == ["parameter", "beta_frac", "residual_norm", "status"]
        np.testing.assert_allclose(report["beta_frac"], [0.784750, 0.783218, 0.781435], atol=2e-6)

    def test_lambda0_with_singular_point(self, tmp_path):
        model = {"kind": "marshall_olkin", "mode": "fixed_shocks", "lambda1": 0.05, "lambda2": 0.25}
        config = {"model": model, "capital": 50, "sweep": {"parameter": "lambda0", "grid": [0.0, 0.2]}}
        code, report = _run(tmp_path, "sweep", config)
        assert code == cli.EXIT_OK
        assert list(report["status"]) == ["ok", "error"]


class TestEstimate:

    def test_rows(self, tmp_path):
        config = {"model": FGM_MODEL, "capital": 50, "samples": 20000, "allocation": [35, 15]}
        code, report = _run(tmp_path, "estimate", config, "--seed", "7")
        assert code == cli.EXIT_OK
        assert list(report["quantity"]) == ["I", "J", "I_loc", "lower_1", "lower_2", "upper_1", "upper_2"]
        assert (report["seed"] == 7).all()
        assert (report["n"] == 20000).all()
        values = report.set_index("quantity")["value"]
        assert values["I"] + values["J"] == pytest.approx(values["I_loc"], rel=1e-12)

    def test_reproducible(self, tmp_path):
        config = {"model": FGM_MODEL, "capital": 50, "samples": 5000}
        _, first = _run(tmp_path, "estimate", config)
        _, second = _run(tmp_path, "estimate", config)
        pd.testing.assert_frame_equal(first, second)

    def test_bad_allocation(self, tmp_path):
        config = {"model": FGM_MODEL, "capital": 50, "samples": 100, "allocation": [10, 10]}
        code, _ = _run(tmp_path, "estimate", config)
        assert code == cli.EXIT_CONFIG


class TestAsymptotic:

    def test_exponential(self, tmp_path):
        config = {"model": {"kind": "independent_exponential", "rates": [0.5, 1, 2]}, "capital": 50}
        code, report = _run(tmp_path, "asymptotic", config)
        assert code == cli.EXIT_OK
        rows = report.set_index("indicator")
        np.testing.assert_allclose(rows.loc["I", ["alpha_1", "alpha_2", "alpha_3"]], [4 / 7, 2 / 7, 1 / 7])
        np.testing.assert_allclose(rows.loc["J", ["alpha_1", "alpha_2", "alpha_3"]], [1, 0, 0])

    def test_tied(self, tmp_path):
        config = {"model": {"kind": "independent_pareto", "shape": 2, "scales": [2, 2]}, "capital": 50}
        code, report = _run(tmp_path, "asymptotic", config)
        assert code == cli.EXIT_OK
        assert list(report["status"]) == ["ok", "tied"]

    def test_unsupported_model(self, tmp_path):
        code, _ = _run(tmp_path, "asymptotic", {"model": FGM_MODEL, "capital": 50})
        assert code == cli.EXIT_CONFIG


class TestValidate:

    def test_passes(self, tmp_path):
        config = {"model": dict(FGM_MODEL, theta=0.5), "capital": 50, "samples": 50000}
        code, report = _run(tmp_path, "validate", config)
        assert code == cli.EXIT_OK
        assert set(report["check"]) == {"identity_I_plus_J", "partition_lower_upper", "stationarity_max_z",
                                        "fgm_theta0_vs_independence", "fgm_expanded_vs_exact",
                                        "mo_lambda0_vs_independence"}
        assert report["passed"].all()

    def test_failure_exit_code(self, tmp_path):
        config = {"model": dict(FGM_MODEL, theta=0.5), "capital": 50, "samples": 20000,
                  "validation": {"tolerance_sigmas": 0.0}}
        code, report = _run(tmp_path, "validate", config)
        assert code == cli.EXIT_VALIDATION
        failed = report.loc[~report["passed"], "check"].tolist()
        assert failed == ["stationarity_max_z"]

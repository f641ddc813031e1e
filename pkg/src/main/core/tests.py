"""Tests for the core app: run-spec forms, artifacts and the ``lab`` command.

The command's exit-code contract is tested with the runner mocked out;
the runner itself is exercised end to end on small configurations.
"""

import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from .conf import lab_setting, override_lab, worker_count
from .exceptions import ConfigError, ConvergenceError, NumericalError
from .export import Artifact, sidecar_path, write_artifact
from .forms import RegressionCurveForm, SpectrumForm, TrainingCurveForm
from .models import RunSpec, load_document
from .runner import run, validate

IDENTITY = {"kind": "atoms", "H": {"atoms": [{"t": 1.0, "w": 1.0}]}}
TWO_MASS = {"kind": "atoms", "H": {"atoms": [{"t": 1.0, "w": 0.5}, {"t": 4.0, "w": 0.5}]}}


class SettingsTests(SimpleTestCase):
    def test_unknown_setting(self):
        with self.assertRaises(ConfigError):
            lab_setting("NOT_A_SETTING")

    @override_lab(THREADS=3)
    def test_override_keeps_other_entries(self):
        self.assertEqual(worker_count(), 3)
        self.assertEqual(lab_setting("GRID_SIZE"), 512)

    def test_thread_override(self):
        self.assertEqual(worker_count(2), 2)
        with self.assertRaises(ConfigError):
            worker_count(0)


class FormTests(SimpleTestCase):
    def test_population_and_defaults(self):
        form = SpectrumForm(data={"sigma": IDENTITY, "gamma": 0.5})
        self.assertTrue(form.is_valid(), form.errors)
        self.assertEqual(form.cleaned_data["grid_size"], 512)
        self.assertEqual(float(form.cleaned_data["aspect"]), 0.5)
        self.assertEqual(form.cleaned_data["population"].mean, 1.0)

    def test_gamma_from_dimensions(self):
        form = SpectrumForm(data={"sigma": TWO_MASS, "p": 500, "n": 1500})
        self.assertTrue(form.is_valid(), form.errors)
        self.assertAlmostEqual(form.resolved_params()["gamma"], 1 / 3, places=15)

    def test_gamma_must_match_dimensions(self):
        form = SpectrumForm(data={"sigma": TWO_MASS, "gamma": 0.5, "p": 500, "n": 1500})
        self.assertFalse(form.is_valid())

    def test_needs_an_aspect_ratio(self):
        self.assertFalse(SpectrumForm(data={"sigma": IDENTITY}).is_valid())

    def test_toeplitz_needs_dimension(self):
        form = SpectrumForm(data={"sigma": {"kind": "toeplitz_ar", "rho": 0.5}, "gamma": 0.5})
        self.assertFalse(form.is_valid())
        form = SpectrumForm(data={"sigma": {"kind": "toeplitz_ar", "rho": 0.5}, "p": 100, "n": 150})
        self.assertTrue(form.is_valid(), form.errors)
        self.assertEqual(len(form.cleaned_data["population"].atoms), 100)

    def test_domain_errors_become_form_errors(self):
        bad = {"kind": "atoms", "H": {"atoms": [{"t": 1.0, "w": 0.4}]}}
        form = SpectrumForm(data={"sigma": bad, "gamma": 0.5})
        self.assertFalse(form.is_valid())
        self.assertIn("sum to 1", str(form.errors))

    def test_critical_ratio_rejected(self):
        self.assertFalse(SpectrumForm(data={"sigma": IDENTITY, "gamma": 1.0}).is_valid())

    def test_default_times(self):
        form = TrainingCurveForm(data={"sigma": IDENTITY, "gamma": 0.5, "alpha": 1.0, "lam": 0.0})
        self.assertTrue(form.is_valid(), form.errors)
        self.assertEqual(len(form.cleaned_data["times"]), lab_setting("TIME_POINTS"))

    def test_times_must_increase(self):
        data = {"sigma": IDENTITY, "gamma": 0.5, "alpha": 1.0, "lam": 0.0, "times": [1.0, 0.5]}
        self.assertFalse(TrainingCurveForm(data=data).is_valid())

    def test_replicates_need_dimensions(self):
        data = {"sigma": IDENTITY, "gamma": 0.5, "alpha": 1.0, "lam": 0.0, "replicates": 3}
        self.assertFalse(RegressionCurveForm(data=data).is_valid())

    def test_unknown_parameter(self):
        spec = RunSpec("spectrum", {"sigma": IDENTITY, "gamma": 0.5, "colour": "red"}, "out.csv")
        with self.assertRaises(ConfigError):
            validate(spec)

    def test_errors_are_one_json_line(self):
        spec = RunSpec("spectrum", {"sigma": IDENTITY}, "out.csv")
        with self.assertRaises(ConfigError) as ctx:
            validate(spec)
        self.assertNotIn("\n", str(ctx.exception))
        json.loads(str(ctx.exception))


class RunSpecTests(SimpleTestCase):
    def test_unknown_command(self):
        with self.assertRaises(ConfigError):
            RunSpec("plot", {}, "out.csv")

    def test_overrides(self):
        payload = {"command": "simulate", "output": "a.csv", "params": {"experiment": {"seed": 1}}}
        spec = RunSpec.from_payload(payload, output="b.json", format="json", seed=9, threads=None)
        self.assertEqual(spec.output, Path("b.json"))
        self.assertEqual(spec.format, "json")
        self.assertEqual(spec.params["experiment"]["seed"], 9)
        self.assertEqual(payload["params"]["experiment"]["seed"], 1)

    def test_seed_goes_to_params_without_experiment(self):
        spec = RunSpec.from_payload({"command": "lda-error", "output": "a.csv", "params": {}}, seed=4)
        self.assertEqual(spec.params["seed"], 4)

    def test_unknown_top_level_key(self):
        with self.assertRaises(ConfigError):
            RunSpec.from_payload({"command": "spectrum", "output": "a.csv", "verbose": True})

    def test_missing_output(self):
        with self.assertRaises(ConfigError):
            RunSpec.from_payload({"command": "spectrum"})

    def test_bad_threads(self):
        with self.assertRaises(ConfigError):
            RunSpec("spectrum", {}, "out.csv", threads=0)

    def test_documents(self):
        with tempfile.TemporaryDirectory() as tmp:
            empty = Path(tmp) / "empty.json"
            empty.write_text("")
            self.assertEqual(load_document(empty), {})
            broken = Path(tmp) / "broken.json"
            broken.write_text("{")
            with self.assertRaises(ConfigError):
                load_document(broken)
            with self.assertRaises(ConfigError):
                load_document(Path(tmp) / "missing.json")


class ExportTests(SimpleTestCase):
    def test_csv_layout(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_artifact(Artifact(pd.DataFrame({"t": [0.5, 1.0], "risk": [1.25, 1.5]})), Path(tmp) / "a.csv", "csv")
            self.assertEqual(path.read_text(), "t,risk\n0.5,1.25\n1.0,1.5\n")

    def test_json_nan_is_null(self):
        with tempfile.TemporaryDirectory() as tmp:
            artifact = Artifact(pd.DataFrame({"x": [1.0], "se": [np.nan]}), {"bandwidth": np.float64(0.1)})
            payload = json.loads(write_artifact(artifact, Path(tmp) / "a.json", "json").read_text())
            self.assertEqual(payload, {"rows": [{"x": 1.0, "se": None}], "bandwidth": 0.1})

    def test_sidecar_name(self):
        self.assertEqual(sidecar_path(Path("out/fig1.csv")), Path("out/fig1.csv.run.json"))


class RunnerTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def _run(self, command, params, fmt="csv"):
        output = self.dir / f"{command}.{fmt}"
        return run(RunSpec(command, params, output, fmt))

    def test_spectrum(self):
        path = self._run("spectrum", {"sigma": IDENTITY, "gamma": 0.5, "grid_size": 64})
        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ["x", "f", "g", "density"])
        self.assertGreaterEqual(len(frame), 64)
        resolved = json.loads(sidecar_path(path).read_text())
        self.assertEqual(resolved["params"]["grid_size"], 64)
        self.assertEqual(resolved["command"], "spectrum")

    def test_training_curve(self):
        params = {"sigma": IDENTITY, "gamma": 0.5, "alpha": 1.0, "lam": 1e-8, "times": [1.0, 1e6], "grid_size": 64}
        payload = json.loads(self._run("training-curve", params, "json").read_text())
        self.assertEqual([row["t"] for row in payload["rows"]], [1.0, 1e6])
        self.assertAlmostEqual(payload["rows"][-1]["train_error"], 0.5, delta=1e-3)
        self.assertFalse(payload["overregularized"])

    def test_regression_curve_with_replicates(self):
        params = {
            "sigma": IDENTITY,
            "p": 40,
            "n": 80,
            "alpha": 1.0,
            "lam": 0.1,
            "times": [0.1, 1.0, 10.0],
            "replicates": 2,
            "seed": 5,
            "grid_size": 64,
        }
        frame = pd.read_csv(self._run("regression-curve", params))
        self.assertEqual(
            list(frame.columns),
            [
                "t",
                "predicted_risk",
                "predicted_train_error",
                "empirical_mean",
                "empirical_se",
                "empirical_train_mean",
                "empirical_train_se",
            ],
        )
        self.assertTrue(np.all(frame["empirical_mean"] >= 1.0))

    def test_lda_error(self):
        params = {
            "sigma": TWO_MASS,
            "gamma": 0.5,
            "alphas": [1.0, 2.0],
            "shrinker": {"family": "ridge_inverse", "lambda": 1.0},
            "grid_size": 64,
        }
        frame = pd.read_csv(self._run("lda-error", params))
        self.assertEqual(frame["alpha"].tolist(), [1.0, 2.0])
        self.assertGreater(frame["error"].iloc[0], frame["error"].iloc[1])

    def test_lda_population_must_avoid_zero(self):
        sigma = {"kind": "atoms", "H": {"atoms": [{"t": 0.0, "w": 0.5}, {"t": 1.0, "w": 0.5}]}}
        params = {"sigma": sigma, "gamma": 0.5, "alphas": [1.0], "shrinker": {"family": "inverse"}}
        with self.assertRaises(ConfigError):
            self._run("lda-error", params)

    def test_optimal_shrinkage(self):
        params = {"sigma": TWO_MASS, "gamma": 0.5, "alpha": 1.0, "grid_size": 64}
        payload = json.loads(self._run("optimal-shrinkage", params, "json").read_text())
        self.assertEqual(set(payload["rows"][0]), {"x", "h_opt"})
        self.assertLess(payload["kkt_residual"], 1e-4)
        self.assertGreaterEqual(payload["psd_floor"], 0.0)

    def test_simulate_rerun_is_identical(self):
        params = {
            "experiment": {"p": 20, "n": 40, "alpha": 1.0, "sigma": IDENTITY, "seed": 3, "replicates": 3},
            "task": "regression",
            "shrinkers": {"ridge": {"family": "ridge", "lambda": 0.5}, "zero": {"family": "constant", "c": 0.0}},
            "frobenius": True,
        }
        path = self._run("simulate", params)
        first = path.read_bytes()
        frame = pd.read_csv(path)
        self.assertEqual(frame["stat"].tolist(), ["replicate"] * 6 + ["mean", "mean", "se", "se"])
        self.assertIn("frobenius_loss", frame.columns)
        run(RunSpec.from_file(sidecar_path(path)))
        self.assertEqual(path.read_bytes(), first)

    def test_simulate_lda_with_spectral_shrinker(self):
        params = {
            "experiment": {"p": 20, "n": 40, "alpha": 2.0, "sigma": TWO_MASS, "replicates": 2},
            "task": "lda",
            "shrinkers": {"lp": {"family": "lp_covariance"}},
            "grid_size": 64,
        }
        frame = pd.read_csv(self._run("simulate", params))
        self.assertIn("lda_error", frame.columns)
        self.assertIn("degenerate", frame.columns)

    def test_estimate_spectrum(self):
        params = {"experiment": {"p": 200, "n": 400, "alpha": 0.0, "sigma": IDENTITY}, "points": 32}
        payload = json.loads(self._run("estimate-spectrum", params, "json").read_text())
        self.assertEqual(len(payload["rows"]), 32)
        self.assertGreater(payload["bandwidth"], 0)


class LabCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.config = Path(self.tmp.name) / "run.json"
        self.config.write_text(
            json.dumps({"command": "spectrum", "output": str(Path(self.tmp.name) / "s.csv"), "params": {}})
        )

    def test_no_configuration_prints_usage(self):
        out = StringIO()
        with self.assertRaises(CommandError) as ctx:
            call_command("lab", stdout=out)
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn("usage", out.getvalue())

    def test_empty_document_prints_usage(self):
        self.config.write_text("{}")
        with self.assertRaises(CommandError) as ctx:
            call_command("lab", config=str(self.config), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_invalid_configuration_exit_code(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("lab", config=str(self.config), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertEqual(json.loads(str(ctx.exception))["error"], "config")

    @patch("core.management.commands.lab.run")
    def test_numerical_failure_exit_code(self, mock_run):
        mock_run.side_effect = ConvergenceError("fixed point stalled", 1e-3)
        with self.assertRaises(CommandError) as ctx:
            call_command("lab", config=str(self.config), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertEqual(json.loads(str(ctx.exception))["error"], "convergence")

    @patch("core.management.commands.lab.run")
    def test_flags_override_document(self, mock_run):
        mock_run.return_value = Path("elsewhere.json")
        out = StringIO()
        call_command(
            "lab", "risk-surface", config=str(self.config), output="elsewhere.json", artifact_format="json",
            threads=2, stdout=out,
        )
        spec = mock_run.call_args.args[0]
        self.assertEqual((spec.command, spec.format, spec.threads), ("risk-surface", "json", 2))
        self.assertIn("elsewhere.json", out.getvalue())

    @patch("core.management.commands.lab.run")
    def test_generic_numerical_error(self, mock_run):
        mock_run.side_effect = NumericalError("mass check failed")
        with self.assertRaises(CommandError) as ctx:
            call_command("lab", config=str(self.config), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 3)

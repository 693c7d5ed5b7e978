"""Reference spectrum and the full validation run, end to end through the CLI.

Both run on a 2001-point grid; validation uses 400 trajectories.
"""

import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

import app
from core.experiments import REFERENCE_BARRIER, REFERENCE_MINIMUM, REFERENCE_THERMAL

REFERENCE_CONFIG = """
[quartic]
mu = 1.80487
lambda = 14.73360

[capacitance]
calibrate = true
target_ground_energy = -0.0440591

[grid]
n_points = 2001

[basis]
n_levels = 8

[initial_state]
kind = "gaussian"
x_m = -0.27
sigma_x = 0.06

[spectrum]
convergence_study = true
"""

TRAJECTORIES = """
[trajectories]
n_trajectories = 400
seed = 20240229
kappa_multiplier = 1.0
steps_per_period = 100
span_periods = 40.0
record_every = 10
batch_size = 200
workers = 2
"""


class CommandRunTests(unittest.TestCase):
    def setUp(self) -> None:
        self.tempdir = tempfile.TemporaryDirectory()
        self.root = Path(self.tempdir.name)
        self.out = self.root / "out"

    def tearDown(self) -> None:
        self.tempdir.cleanup()

    def _main(self, command: str, text: str):
        path = self.root / "config.toml"
        path.write_text(text, encoding="utf-8")
        stdout, stderr = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            code = app.main([command, "--config", str(path), "--out", str(self.out)])
        return code, stdout.getvalue(), stderr.getvalue()

    def test_reference_spectrum(self) -> None:
        code, stdout, err = self._main("spectrum", REFERENCE_CONFIG)
        self.assertEqual(code, app.EXIT_OK, err)
        self.assertIn("barrier dU = 0.0552", stdout)

        summary = json.loads((self.out / "spectrum" / "summary.json").read_text(encoding="utf-8"))
        self.assertAlmostEqual(summary["barrier_height_eV"] / REFERENCE_BARRIER, 1.0, delta=1e-4)
        self.assertAlmostEqual(summary["minima_x"][0], -REFERENCE_MINIMUM, delta=1e-4)
        self.assertAlmostEqual(summary["minima_x"][1], REFERENCE_MINIMUM, delta=1e-4)
        self.assertAlmostEqual(summary["energies_eV"][0], -0.0440591, delta=1e-9)
        self.assertEqual(len(summary["energies_eV"]), 8)
        self.assertTrue(2e-7 <= summary["exact_splitting_eV"] <= 2e-6)
        self.assertAlmostEqual(summary["thermal_ratio"] / REFERENCE_THERMAL, 1.0, delta=0.1)
        self.assertEqual(summary["parities"][:4], ["even", "odd", "even", "odd"])
        self.assertLess(summary["x01"], 0.0)
        self.assertTrue(0.95 <= summary["captured_norm_by_levels"][3] <= 0.99)
        self.assertLess(summary["splitting_drift"], 0.01)

        convergence = json.loads((self.out / "spectrum" / "convergence.json").read_text(encoding="utf-8"))
        self.assertFalse(convergence["grid_too_coarse"])
        rows = (self.out / "spectrum" / "eigenvalues.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(len([row for row in rows if not row.startswith("#")]), 8)

    def test_validation_passes_every_stage(self) -> None:
        code, stdout, err = self._main("validate", REFERENCE_CONFIG + TRAJECTORIES)
        self.assertEqual(code, app.EXIT_OK, err)

        report = json.loads((self.out / "validation" / "report.json").read_text(encoding="utf-8"))
        self.assertTrue(report["passed"])
        checks = {check["name"]: check for check in report["checks"]}
        for name in (
            "geometry_barrier",
            "ground_energy_calibrated",
            "doublet_ratio_band",
            "splitting_convergence",
            "parity_alternation",
            "x_selection_rule",
            "closed_amplitudes_constant",
            "weak_coupling_slow_survives",
            "critical_fast_pair_fades",
            "strong_coupling_overdamped",
            "monte_carlo_vs_closed_form",
            "trajectory_norm",
            "eigenstate_convergence",
            "born_rule_outcomes",
        ):
            self.assertIn(name, checks)
            self.assertEqual(checks[name]["status"], "passed", f"{name}: {checks[name]}")
        self.assertNotIn("failed", {check["status"] for check in report["checks"]})
        self.assertIn("(widened bands)", checks["monte_carlo_vs_closed_form"]["detail"])
        self.assertEqual(checks["monte_carlo_vs_closed_form"]["tolerance"], "4 standard errors")
        self.assertIn("monte_carlo_vs_closed_form: passed", stdout)

        markdown = (self.out / "validation" / "report.md").read_text(encoding="utf-8")
        self.assertIn("**Status**: PASSED", markdown)

    def test_validation_without_the_reference_setup_skips_its_stage(self) -> None:
        text = REFERENCE_CONFIG.replace("calibrate = true", "calibrate = false\nfarads = 1.0e-16") + TRAJECTORIES
        code, _, err = self._main("validate", text.replace("n_trajectories = 400", "n_trajectories = 200"))
        self.assertEqual(code, app.EXIT_OK, err)
        names = {check["name"] for check in json.loads((self.out / "validation" / "report.json").read_text())["checks"]}
        self.assertNotIn("geometry_barrier", names)
        self.assertIn("strong_coupling_overdamped", names)


if __name__ == "__main__":
    unittest.main()

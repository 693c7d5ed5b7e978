import json
import tempfile
import unittest
from pathlib import Path

from core.run_log import COMMAND, SWEEP_ENTRY, RunLog


class RunLogTests(unittest.TestCase):
    def setUp(self) -> None:
        self.tempdir = tempfile.TemporaryDirectory()
        self.root = Path(self.tempdir.name) / "logs"
        self.log = RunLog(self.root, run_id="run-a")

    def tearDown(self) -> None:
        self.tempdir.cleanup()

    def test_command_record_shape(self) -> None:
        self.log.command("spectrum", status="ok", duration_ms=5, config="configs/default.toml")
        lines = self.log.log_path.read_text(encoding="utf-8").strip().splitlines()
        self.assertEqual(len(lines), 1)
        payload = json.loads(lines[0])
        self.assertEqual(payload["kind"], COMMAND)
        self.assertEqual(payload["name"], "spectrum")
        self.assertEqual(payload["run_id"], "run-a")
        self.assertEqual(payload["config"], "configs/default.toml")
        self.assertIsNone(payload["artifact"])
        self.assertIsNone(payload["kappa_e"])

    def test_sweep_entries_join_their_command(self) -> None:
        self.log.sweep_entry("0 x kappa_crit_32", artifact="sweep/trace_00.csv", kappa_e=0.0, status="ok", duration_ms=1)
        self.log.sweep_entry(
            "1 x kappa_crit_32", artifact="sweep/trace_01.csv", kappa_e=2.5e9, status="failed", duration_ms=1, error="boom"
        )
        self.log.command("sweep", status="failed", duration_ms=3, error="1 entry failed")

        entries = self.log.records(SWEEP_ENTRY)
        self.assertEqual([e.artifact for e in entries], ["sweep/trace_00.csv", "sweep/trace_01.csv"])
        self.assertEqual(entries[1].kappa_e, 2.5e9)
        self.assertEqual([r.name for r in self.log.records(COMMAND)], ["sweep"])
        self.assertEqual([r.name for r in self.log.failures()], ["1 x kappa_crit_32", "sweep"])

    def test_runs_are_kept_apart(self) -> None:
        self.log.command("spectrum", status="ok", duration_ms=1)
        other = RunLog(self.root, run_id="run-b")
        other.command("validate", status="failed", duration_ms=1, error="trace")

        self.assertEqual(len(other.records()), 2)
        self.assertEqual([r.name for r in other.records(run_id="run-b")], ["validate"])
        self.assertEqual(self.log.failures(run_id="run-a"), [])

    def test_generated_run_ids_differ(self) -> None:
        self.assertNotEqual(RunLog(self.root).run_id, RunLog(self.root).run_id)

    def test_unreadable_lines_are_skipped(self) -> None:
        self.log.command("spectrum", status="ok", duration_ms=1)
        with self.log.log_path.open("a", encoding="utf-8") as handle:
            handle.write("{not json\n")
            handle.write(json.dumps({"unexpected": 1}) + "\n")
        with self.assertLogs("core.run_log", level="WARNING"):
            records = self.log.records()
        self.assertEqual([r.name for r in records], ["spectrum"])

    def test_unknown_kind_rejected(self) -> None:
        with self.assertRaises(ValueError):
            self.log.records("audit")

    def test_empty_log(self) -> None:
        self.assertEqual(RunLog(Path(self.tempdir.name) / "empty").records(), [])


if __name__ == "__main__":
    unittest.main()

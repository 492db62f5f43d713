import json

import numpy as np
import pytest

from diverkit import synth
from diverkit.core import (
    BoundingBox,
    DetectionResult,
    GridConfig,
    TrackerConfig,
    ValidationError,
)
from diverkit.harness import (
    DetectionReport,
    InstructionReport,
    run_experiment,
    score_detection,
    score_instructions,
)
from diverkit.lang import Snapshot, TaskSwitch, Token


def fake_result(cycle, window, score, detected, grid):
    from diverkit.core import window_center

    traj = np.full(15, window, dtype=np.int64)
    cx, cy = window_center(grid, window)
    return DetectionResult(
        trajectory=traj,
        score=score,
        detected=detected,
        bbox=BoundingBox(cx, cy, 30, 30, score),
        cycle_index=cycle,
    )


def straight_truth(grid, window, cycles, cfg):
    from diverkit.core import window_center

    cx, cy = window_center(grid, window)
    frames = (cycles - 1) * cfg.stride + cfg.slide
    return synth.GroundTruth(centers=[(cx, cy)] * frames, windows=[window] * frames)


CFG = TrackerConfig()
GRID = GridConfig(320, 240)


class TestScoreDetection:
    def test_all_exact_is_100_positive(self):
        truth = straight_truth(GRID, 12, 4, CFG)
        results = [fake_result(k, 12, 100.0, True, GRID) for k in range(4)]
        report = score_detection(results, truth, CFG, GRID)
        assert report.percentage("positive") == 100.0
        assert report.count("missed") == report.count("wrong") == 0

    def test_all_undetected_is_100_missed(self):
        truth = straight_truth(GRID, 12, 4, CFG)
        results = [fake_result(k, 12, 10.0, False, GRID) for k in range(4)]
        report = score_detection(results, truth, CFG, GRID)
        assert report.percentage("missed") == 100.0

    def test_adjacent_window_counts_positive(self):
        truth = straight_truth(GRID, 12, 1, CFG)
        results = [fake_result(0, 13, 100.0, True, GRID)]  # one column right
        report = score_detection(results, truth, CFG, GRID)
        assert report.classifications == ("positive",)

    def test_two_windows_away_is_wrong(self):
        truth = straight_truth(GRID, 12, 1, CFG)
        results = [fake_result(0, 14, 100.0, True, GRID)]
        report = score_detection(results, truth, CFG, GRID)
        assert report.classifications == ("wrong",)

    def test_chebyshev_diagonal_counts(self):
        truth = straight_truth(GRID, 12, 1, CFG)
        diag = 12 + GRID.cols + 1  # one row down, one column right
        report = score_detection([fake_result(0, diag, 90.0, True, GRID)], truth, CFG, GRID)
        assert report.classifications == ("positive",)

    def test_partition_and_percentages(self):
        truth = straight_truth(GRID, 12, 6, CFG)
        results = [
            fake_result(0, 12, 90.0, True, GRID),
            fake_result(1, 12, 90.0, True, GRID),
            fake_result(2, 40, 90.0, True, GRID),
            fake_result(3, 12, 10.0, False, GRID),
            fake_result(4, 13, 90.0, True, GRID),
            fake_result(5, 12, 10.0, False, GRID),
        ]
        report = score_detection(results, truth, CFG, GRID)
        counts = {k: report.count(k) for k in ("positive", "missed", "wrong")}
        assert counts == {"positive": 3, "missed": 2, "wrong": 1}
        total_pct = sum(report.percentage(k) for k in counts)
        assert abs(total_pct - 100.0) <= 0.1

    def test_truth_too_short_rejected(self):
        truth = straight_truth(GRID, 12, 1, CFG)
        results = [fake_result(k, 12, 90.0, True, GRID) for k in range(3)]
        with pytest.raises(ValidationError):
            score_detection(results, truth, CFG, GRID)

    def test_render_rows_format(self):
        report = DetectionReport(
            classifications=("positive",) * 647 + ("missed",) * 46 + ("wrong",) * 12,
            tolerance_windows=1,
        )
        rows = report.render_rows()
        # 647/705 = 91.8%, 46/705 = 6.5%, 12/705 = 1.7%
        assert rows[0] == "Positive detection: 647 (91.8%)"
        assert rows[1] == "Missed detection: 46 (6.5%)"
        assert rows[2] == "Wrong detection: 12 (1.7%)"


class TestScoreInstructions:
    def _events(self, names):
        return [(i, Token.from_name(n)) for i, n in enumerate(names)]

    def test_identical_lists_are_100(self):
        decoded = [TaskSwitch(task="HOVER", duration_s=50), Snapshot(duration_s=20)]
        report = score_instructions(
            decoded, list(decoded), self._events(["STOP", "GO"]), self._events(["STOP", "GO"])
        )
        assert report.instruction_accuracy() == 100.0
        assert report.token_accuracy() == 100.0

    def test_one_of_four_wrong_is_75(self):
        expected = [
            TaskSwitch(task="HOVER", duration_s=50),
            Snapshot(duration_s=20),
            TaskSwitch(task="FOLLOW"),
            TaskSwitch(task="EXECUTE", program=1),
        ]
        decoded = list(expected)
        decoded[2] = TaskSwitch(task="MOVE_UP")
        report = score_instructions(decoded, expected, [], [])
        assert report.instruction_accuracy() == 75.0

    def test_missing_instruction_counts_wrong(self):
        expected = [TaskSwitch(task="HOVER"), Snapshot(duration_s=5)]
        report = score_instructions(expected[:1], expected, [], [])
        assert report.correct_instructions == 1
        assert report.total_instructions == 2

    def test_render_row_shape(self):
        report = InstructionReport(30, 29, 162, 152)
        row = report.render_row()
        # 29/30 = 96.7%, 152/162 = 93.8%, rendered as 'a (b)' like the
        # instructions-(gestures) table columns
        assert row == "30 (162) -> 29 (152), accuracy 96.7 (93.8)"

    def test_correct_cannot_exceed_total(self):
        with pytest.raises(ValidationError):
            InstructionReport(2, 3, 0, 0)


class TestRunExperiment:
    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="unknown experiment kind"):
            run_experiment({"kind": "dance", "out": str(tmp_path)})

    def test_empty_spec_names_missing_field(self, tmp_path):
        with pytest.raises(ValidationError, match="kind"):
            run_experiment({})

    def test_missing_scene_named(self, tmp_path):
        with pytest.raises(ValidationError, match="scene"):
            run_experiment({"kind": "track", "out": str(tmp_path)})

    def test_track_experiment(self, tmp_path):
        spec = {
            "kind": "track",
            "scene": {
                "frames": 45,
                "width": 90,
                "height": 90,
                "background": 60.0,
                "noise_sigma": 2.0,
                "flipper": {"radius": 15, "intensity": 215.0, "amplitude": 40.0, "frequency": 1.5},
                "path": {"kind": "static"},
                "start": [45.0, 45.0],
                "seed": 5,
            },
        }
        report = run_experiment(spec, out_dir=tmp_path / "run")
        assert report["kind"] == "track"
        assert report["detection"]["cycles"] == 3
        assert (tmp_path / "run" / "report.json").exists()
        assert (tmp_path / "run" / "detections.jsonl").exists()
        lines = (tmp_path / "run" / "detections.jsonl").read_text().splitlines()
        assert len(lines) == 3
        assert all("bbox" in json.loads(line) for line in lines)

    def test_decode_experiment_oracle(self, tmp_path):
        spec = {
            "kind": "decode",
            "recognizer": "oracle",
            "scene": {
                "segments": [
                    {"left": "zero", "right": "zero", "frames": 12},
                    {"left": "two", "right": "ok", "frames": 12},
                    {"left": "five", "right": "five", "frames": 12},
                ],
                "seed": 1,
            },
        }
        report = run_experiment(spec, out_dir=tmp_path / "run")
        assert report["instructions"]["total_instructions"] == 1
        assert report["instructions"]["correct_instructions"] == 1
        assert report["decoded"][0]["task"] == "FOLLOW"

    def test_follow_experiment(self, tmp_path):
        spec = {
            "kind": "follow",
            "scene": {"offset_x": 0.3, "offset_y": 0.0, "duration_s": 10.0, "fps": 10.0},
        }
        report = run_experiment(spec, out_dir=tmp_path / "run")
        assert report["converged"] is True
        assert (tmp_path / "run" / "follow_log.csv").exists()

    def test_reports_byte_identical_across_runs(self, tmp_path):
        spec = {
            "kind": "track",
            "scene": {
                "frames": 30,
                "width": 90,
                "height": 90,
                "noise_sigma": 3.0,
                "start": [45.0, 45.0],
                "seed": 12,
            },
        }
        run_experiment(spec, out_dir=tmp_path / "a")
        run_experiment(spec, out_dir=tmp_path / "b")
        assert (tmp_path / "a" / "report.json").read_bytes() == (
            tmp_path / "b" / "report.json"
        ).read_bytes()


class TestBundledSpecs:
    def test_study_instructions_runs_4_of_4(self, tmp_path):
        from importlib import resources

        raw = resources.files("diverkit").joinpath(
            "data", "experiments", "study_instructions.json"
        ).read_text()
        report = run_experiment(json.loads(raw), out_dir=tmp_path)
        assert report["instructions"]["total_instructions"] == 4
        assert report["instructions"]["correct_instructions"] == 4
        tasks = [rec for rec in report["decoded"]]
        assert tasks[0] == {
            "type": "task_switch",
            "task": "HOVER",
            "duration_s": 50,
            "emitted_at_frame": tasks[0]["emitted_at_frame"],
        }
        assert tasks[1]["type"] == "snapshot" and tasks[1]["duration_s"] == 20
        assert tasks[2] == {
            "type": "param_reconfig",
            "param": 3,
            "direction": "DECREASE",
            "emitted_at_frame": tasks[2]["emitted_at_frame"],
        }
        assert tasks[3]["task"] == "EXECUTE" and tasks[3]["program"] == 1

    def test_study_instructions_with_shape_recognizer(self, tmp_path):
        from importlib import resources

        raw = resources.files("diverkit").joinpath(
            "data", "experiments", "study_instructions.json"
        ).read_text()
        spec = dict(json.loads(raw), recognizer="shape")
        report = run_experiment(spec, out_dir=tmp_path)
        assert report["instructions"]["correct_instructions"] == 4
        assert report["instructions"]["token_accuracy_pct"] == 100.0

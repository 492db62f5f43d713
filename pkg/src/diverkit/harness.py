"""Scoring against ground truth and experiment orchestration.

Detection cycles are classified positive / missed / wrong: positive when the
tracker fired and its terminal window lies within a Chebyshev grid distance
of the truth window, wrong when it fired farther away, missed when it stayed
silent. Instruction runs are scored by exact AST equality, in order, plus a
token-level accuracy computed on the debounced event streams.

``run_experiment`` drives a whole scenario from a JSON spec and writes
``report.json`` (and logs) into the output directory; everything is a pure
function of the spec's seeds, so reports are byte-identical across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import lang, raster, servo, synth, tracker
from .core import DetectionResult, GridConfig, TrackerConfig, ValidationError, grid_for
from .gesture import OracleRecognizer, ShapeRecognizer
from .synth import DiverSceneSpec, GestureSceneSpec, GroundTruth

POSITIVE = "positive"
MISSED = "missed"
WRONG = "wrong"


@dataclass(frozen=True)
class DetectionReport:
    classifications: tuple[str, ...]
    tolerance_windows: int
    config: dict = field(default_factory=dict)

    @property
    def cycles(self) -> int:
        return len(self.classifications)

    def count(self, kind: str) -> int:
        return self.classifications.count(kind)

    def percentage(self, kind: str) -> float:
        if not self.classifications:
            return 0.0
        return 100.0 * self.count(kind) / self.cycles

    def render_rows(self) -> list[str]:
        """Rows in 'count (pct%)' form, one per category."""
        return [
            f"{kind.capitalize()} detection: {self.count(kind)} ({self.percentage(kind):.1f}%)"
            for kind in (POSITIVE, MISSED, WRONG)
        ]

    def to_dict(self) -> dict:
        return {
            "cycles": self.cycles,
            "positive": self.count(POSITIVE),
            "missed": self.count(MISSED),
            "wrong": self.count(WRONG),
            "positive_pct": self.percentage(POSITIVE),
            "missed_pct": self.percentage(MISSED),
            "wrong_pct": self.percentage(WRONG),
            "tolerance_windows": self.tolerance_windows,
            "per_cycle": list(self.classifications),
            "config": self.config,
        }


def truth_terminal_windows(
    truth: GroundTruth, cfg: TrackerConfig, grid: GridConfig, cycle_count: int
) -> list[int]:
    """Ground-truth window at the last frame of every cycle."""
    if truth.centers is None:
        raise ValidationError("ground truth carries no blob centers")
    windows = []
    for k in range(cycle_count):
        terminal_frame = k * cfg.stride + cfg.slide - 1
        if terminal_frame >= len(truth.centers):
            raise ValidationError(
                f"truth covers {len(truth.centers)} frames but cycle {k} "
                f"ends at frame {terminal_frame}"
            )
        x, y = truth.centers[terminal_frame]
        windows.append(grid.window_index_at(x, y))
    return windows


def score_detection(
    results: list[DetectionResult],
    truth: GroundTruth,
    cfg: TrackerConfig,
    grid: GridConfig,
    tol_windows: int = 1,
) -> DetectionReport:
    """Classify every cycle against truth (Chebyshev grid distance)."""
    expected = truth_terminal_windows(truth, cfg, grid, len(results))
    classifications = []
    for result, truth_window in zip(results, expected):
        if not result.detected:
            classifications.append(MISSED)
            continue
        row_d, col_d = grid.grid_coords(result.terminal_window)
        row_t, col_t = grid.grid_coords(truth_window)
        chebyshev = max(abs(row_d - row_t), abs(col_d - col_t))
        classifications.append(POSITIVE if chebyshev <= tol_windows else WRONG)
    return DetectionReport(
        classifications=tuple(classifications),
        tolerance_windows=tol_windows,
        config=cfg.to_dict(),
    )


# ---------------------------------------------------------------------------
# instruction scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InstructionReport:
    total_instructions: int
    correct_instructions: int
    total_tokens: int
    correct_tokens: int

    def __post_init__(self):
        if self.correct_instructions > self.total_instructions:
            raise ValidationError("correct instructions exceed the total")
        if self.correct_tokens > self.total_tokens:
            raise ValidationError("correct tokens exceed the total")

    def instruction_accuracy(self) -> float:
        if self.total_instructions == 0:
            return 100.0
        return 100.0 * self.correct_instructions / self.total_instructions

    def token_accuracy(self) -> float:
        if self.total_tokens == 0:
            return 100.0
        return 100.0 * self.correct_tokens / self.total_tokens

    def render_row(self) -> str:
        """'total (gestures)' and 'accuracy (accuracy)' in table form."""
        return (
            f"{self.total_instructions} ({self.total_tokens}) -> "
            f"{self.correct_instructions} ({self.correct_tokens}), "
            f"accuracy {self.instruction_accuracy():.1f} ({self.token_accuracy():.1f})"
        )

    def to_dict(self) -> dict:
        return {
            "total_instructions": self.total_instructions,
            "correct_instructions": self.correct_instructions,
            "total_tokens": self.total_tokens,
            "correct_tokens": self.correct_tokens,
            "instruction_accuracy_pct": self.instruction_accuracy(),
            "token_accuracy_pct": self.token_accuracy(),
        }


def score_instructions(
    decoded: list[lang.Instruction],
    expected: list[lang.Instruction],
    recognized_events: list[tuple[int, lang.Token]],
    expected_events: list[tuple[int, lang.Token]],
) -> InstructionReport:
    """Exact in-order AST comparison plus debounced token-event accuracy."""
    correct_instructions = sum(
        1 for d, e in zip(decoded, expected) if d == e
    )
    correct_tokens = sum(
        1
        for (_, d), (_, e) in zip(recognized_events, expected_events)
        if d == e
    )
    return InstructionReport(
        total_instructions=len(expected),
        correct_instructions=min(correct_instructions, len(expected)),
        total_tokens=len(expected_events),
        correct_tokens=min(correct_tokens, len(expected_events)),
    )


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

EXPERIMENT_KINDS = ("track", "decode", "follow")


def _require(spec: dict, key: str) -> object:
    if key not in spec:
        raise ValidationError(f"experiment spec missing field {key!r}")
    return spec[key]


def load_experiment_spec(path: str | Path) -> dict:
    with open(path) as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(spec, dict):
        raise ValidationError(f"{path}: experiment spec must be a JSON object")
    return spec


def run_experiment(spec: dict, out_dir: str | Path | None = None) -> dict:
    """Run one experiment spec; writes report.json plus logs, returns the report."""
    kind = _require(spec, "kind")
    if kind not in EXPERIMENT_KINDS:
        raise ValidationError(
            f"unknown experiment kind {kind!r}; expected one of {EXPERIMENT_KINDS}"
        )
    out = Path(out_dir if out_dir is not None else _require(spec, "out"))
    out.mkdir(parents=True, exist_ok=True)

    if kind == "track":
        report = _run_track(spec, out)
    elif kind == "decode":
        report = _run_decode(spec, out)
    else:
        report = _run_follow(spec, out)

    report = {"kind": kind, **report}
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _tracker_config(spec: dict) -> TrackerConfig:
    if "tracker" in spec and spec["tracker"]:
        ref = spec["tracker"]
        if isinstance(ref, dict):
            return TrackerConfig.from_dict(ref)
        return TrackerConfig.from_dict(json.loads(Path(ref).read_text()))
    return TrackerConfig()


def _run_track(spec: dict, out: Path) -> dict:
    scene = DiverSceneSpec.from_dict(_require(spec, "scene"))
    cfg = _tracker_config(spec)
    frames, truth = synth.render_diver_sequence(
        scene, window=(cfg.window_w, cfg.window_h)
    )
    results = tracker.track_sequence(frames, cfg)
    grid = grid_for(cfg, scene.width, scene.height)
    report = score_detection(results, truth, cfg, grid)
    with open(out / "detections.jsonl", "w") as fh:
        for result in results:
            fh.write(json.dumps(result.to_record(), sort_keys=True) + "\n")
    raster.write_truth(out, truth.to_dict())
    return {"scene": scene.to_dict(), "detection": report.to_dict()}


def _run_decode(spec: dict, out: Path) -> dict:
    scene = GestureSceneSpec.from_dict(_require(spec, "scene"))
    recognizer_name = spec.get("recognizer", "oracle")
    mapping = lang.load_mapping(spec.get("mapping") or None)
    frames, truth = synth.render_gesture_sequence(scene)

    oracle = OracleRecognizer(truth.gesture_labels)
    truth_stream = [oracle(f, i) for i, f in enumerate(frames)]
    if recognizer_name == "oracle":
        stream = truth_stream
    elif recognizer_name == "shape":
        shape = ShapeRecognizer()
        stream = [shape(f, i) for i, f in enumerate(frames)]
    else:
        raise ValidationError(f"unknown recognizer {recognizer_name!r}")

    decoded = lang.decode(stream, mapping)
    expected = lang.decode(truth_stream, mapping)
    events = lang.debounce(stream, mapping)
    expected_events = lang.debounce(truth_stream, mapping)
    report = score_instructions(decoded, expected, events, expected_events)

    with open(out / "tokens.jsonl", "w") as fh:
        for token in stream:
            fh.write(json.dumps(token.to_record(), sort_keys=True) + "\n")
    with open(out / "instructions.jsonl", "w") as fh:
        for instruction in decoded:
            fh.write(json.dumps(instruction.to_record(), sort_keys=True) + "\n")
    return {
        "scene": scene.to_dict(),
        "recognizer": recognizer_name,
        "instructions": report.to_dict(),
        "decoded": [i.to_record() for i in decoded],
        "expected": [i.to_record() for i in expected],
    }


def _run_follow(spec: dict, out: Path) -> dict:
    scene = dict(_require(spec, "scene"))
    config = servo.load_gains(spec.get("gains") or None)
    offset_x = float(scene.get("offset_x", 0.0))
    offset_y = float(scene.get("offset_y", 0.0))
    duration_s = float(scene.get("duration_s", 10.0))
    fps = float(scene.get("fps", 10.0))
    distance_ratio = float(scene.get("distance_ratio", 1.25))

    world = servo.make_offset_world(offset_x, offset_y, config, distance_ratio=distance_ratio)
    bank = servo.PidBank(config)
    rows = servo.follow_loop(
        world.observe,
        bank,
        duration_s,
        fps,
        frame_w=world.camera.frame_w,
        frame_h=world.camera.frame_h,
    )
    servo.write_follow_log(out / "follow_log.csv", rows)

    last = rows[-1]
    converged = False
    final = {"detected": last.detected}
    if last.errors is not None:
        ex, ey, ea = last.errors
        area = config.target_area_fraction - ea
        rel_area_error = abs(area - config.target_area_fraction) / config.target_area_fraction
        converged = abs(ex) < 0.05 and abs(ey) < 0.05 and rel_area_error <= 0.10
        final.update(
            {"ex": ex, "ey": ey, "ea": ea, "rel_area_error": rel_area_error}
        )
    return {
        "scene": scene,
        "gains": config.to_dict(),
        "converged": converged,
        "steps": len(rows),
        "final": final,
    }

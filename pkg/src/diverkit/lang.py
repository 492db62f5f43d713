"""Gesture-pair instruction language: debounce, mapping table, FSM decoder.

A raw pair must persist for ten consecutive frames before its instruction
token registers, and the run has to break before the same pair can fire
again. The decoder grammar is sentinel-framed:

    program := (STOP task [DIGIT+])
             | (STOP EXECUTE DIGIT+)
             | (CONTD SNAPSHOT DIGIT+)
             | (CONTD PARAM DIGIT+ (INCREASE | DECREASE))
    ... each terminated by GO; DIGIT+ concatenates decimally.

Tokens with no transition from the current state are ignored (self-loop), so
malformed sequences never emit anything.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

from .core import ValidationError
from .gesture import GestureClass, GesturePairToken

DEBOUNCE_FRAMES = 10
IDLE_TIMEOUT_FRAMES = 600


class TokenKind(Enum):
    STOP = "STOP"
    CONTD = "CONTD"
    GO = "GO"
    SNAPSHOT = "SNAPSHOT"
    HOVER = "HOVER"
    FOLLOW = "FOLLOW"
    EXECUTE = "EXECUTE"
    PARAM = "PARAM"
    INCREASE = "INCREASE"
    DECREASE = "DECREASE"
    MOVE_LEFT = "MOVE_LEFT"
    MOVE_RIGHT = "MOVE_RIGHT"
    MOVE_UP = "MOVE_UP"
    MOVE_DOWN = "MOVE_DOWN"
    DIGIT = "DIGIT"


TASK_KINDS = (
    TokenKind.HOVER,
    TokenKind.FOLLOW,
    TokenKind.MOVE_LEFT,
    TokenKind.MOVE_RIGHT,
    TokenKind.MOVE_UP,
    TokenKind.MOVE_DOWN,
)


@dataclass(frozen=True)
class Token:
    """An instruction token; only DIGIT carries a payload (0-5)."""

    kind: TokenKind
    digit: int | None = None

    def __post_init__(self):
        if self.kind is TokenKind.DIGIT:
            if self.digit is None or not 0 <= self.digit <= 5:
                raise ValidationError("DIGIT payload must lie in [0, 5]")
        elif self.digit is not None:
            raise ValidationError(f"{self.kind.value} carries no payload")

    @property
    def name(self) -> str:
        if self.kind is TokenKind.DIGIT:
            return f"DIGIT_{self.digit}"
        return self.kind.value

    @classmethod
    def from_name(cls, name: str) -> "Token":
        if name.startswith("DIGIT_"):
            try:
                return cls(TokenKind.DIGIT, int(name[6:]))
            except ValueError:
                raise ValidationError(f"bad digit token {name!r}") from None
        try:
            return cls(TokenKind[name])
        except KeyError:
            raise ValidationError(f"unknown instruction token {name!r}") from None


def digit(d: int) -> Token:
    return Token(TokenKind.DIGIT, d)


# ---------------------------------------------------------------------------
# gesture-pair -> token mapping
# ---------------------------------------------------------------------------

Pair = tuple[GestureClass, GestureClass]


@dataclass(frozen=True)
class MappingTable:
    """One-to-one map from fully-populated gesture pairs to tokens."""

    pairs: dict[Pair, Token]

    def __post_init__(self):
        seen_tokens = {}
        for pair, token in self.pairs.items():
            if token in seen_tokens:
                raise ValidationError(
                    f"mapping is not one-to-one: {token.name} assigned to both "
                    f"{_pair_name(seen_tokens[token])} and {_pair_name(pair)}"
                )
            seen_tokens[token] = pair
        if not any(t.kind is TokenKind.GO for t in self.pairs.values()):
            raise ValidationError("mapping must assign the GO end sentinel")

    def lookup(self, left: GestureClass | None, right: GestureClass | None) -> Token | None:
        if left is None or right is None:
            return None
        return self.pairs.get((left, right))

    def pair_for(self, token: Token) -> Pair:
        for pair, tok in self.pairs.items():
            if tok == token:
                return pair
        raise ValidationError(f"token {token.name} is not mapped")

    def __len__(self) -> int:
        return len(self.pairs)


def _pair_name(pair: Pair) -> str:
    return f"({pair[0].name}, {pair[1].name})"


def mapping_from_dict(raw: dict) -> MappingTable:
    if "pairs" not in raw or not isinstance(raw["pairs"], list):
        raise ValidationError('mapping file must contain a "pairs" list')
    pairs: dict[Pair, Token] = {}
    for entry in raw["pairs"]:
        try:
            left = GestureClass.from_name(entry["left"])
            right = GestureClass.from_name(entry["right"])
            token = Token.from_name(entry["token"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed mapping entry {entry!r}: {exc}") from exc
        if (left, right) in pairs:
            raise ValidationError(f"duplicate mapping for pair {_pair_name((left, right))}")
        pairs[(left, right)] = token
    return MappingTable(pairs)


def mapping_to_dict(table: MappingTable) -> dict:
    return {
        "pairs": [
            {"left": left.name, "right": right.name, "token": token.name}
            for (left, right), token in table.pairs.items()
        ]
    }


def load_mapping(path: str | Path | None = None) -> MappingTable:
    """Load a mapping table; without a path, the packaged default."""
    if path is None:
        text = resources.files("diverkit").joinpath("data", "mapping.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"mapping file is not valid JSON: {exc}") from exc
    return mapping_from_dict(raw)


def default_mapping() -> MappingTable:
    return load_mapping(None)


# ---------------------------------------------------------------------------
# instructions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskSwitch:
    """Stop the current program and start a task (or a numbered program)."""

    task: str  # HOVER | FOLLOW | MOVE_* | EXECUTE
    duration_s: int | None = None
    program: int | None = None
    emitted_at_frame: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.task == "EXECUTE":
            if self.program is None or self.program < 0:
                raise ValidationError("EXECUTE needs a program number >= 0")
        elif self.program is not None:
            raise ValidationError("only EXECUTE carries a program number")
        if self.duration_s is not None and self.duration_s < 1:
            raise ValidationError("duration must be >= 1 s when present")

    def to_record(self) -> dict:
        rec = {"type": "task_switch", "task": self.task}
        if self.program is not None:
            rec["program"] = self.program
        if self.duration_s is not None:
            rec["duration_s"] = self.duration_s
        rec["emitted_at_frame"] = self.emitted_at_frame
        return rec


@dataclass(frozen=True)
class ParamReconfig:
    """Adjust a numbered parameter of the running program."""

    param: int
    direction: str  # INCREASE | DECREASE
    emitted_at_frame: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.param < 0:
            raise ValidationError("parameter number must be >= 0")
        if self.direction not in ("INCREASE", "DECREASE"):
            raise ValidationError(f"bad direction {self.direction!r}")

    def to_record(self) -> dict:
        return {
            "type": "param_reconfig",
            "param": self.param,
            "direction": self.direction,
            "emitted_at_frame": self.emitted_at_frame,
        }


@dataclass(frozen=True)
class Snapshot:
    """Take pictures for a fixed time while the current program continues."""

    duration_s: int
    emitted_at_frame: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.duration_s < 1:
            raise ValidationError("snapshot duration must be >= 1 s")

    def to_record(self) -> dict:
        return {
            "type": "snapshot",
            "duration_s": self.duration_s,
            "emitted_at_frame": self.emitted_at_frame,
        }


Instruction = TaskSwitch | ParamReconfig | Snapshot


# ---------------------------------------------------------------------------
# debounce
# ---------------------------------------------------------------------------

RawPair = tuple[GestureClass | None, GestureClass | None]


@dataclass
class Debouncer:
    """Confirms a mapped pair after ten identical consecutive frames.

    The confirmed token fires exactly once per run; the run must break
    (any different pair, or a missing hand) before it can fire again.
    """

    table: MappingTable
    window: int = DEBOUNCE_FRAMES
    last_pair: RawPair = (None, None)
    run_length: int = 0
    fired: bool = False

    def update(self, token: GesturePairToken) -> Token | None:
        pair = token.pair
        if pair == self.last_pair:
            self.run_length = min(self.run_length + 1, self.window)
        else:
            self.last_pair = pair
            self.run_length = 1
            self.fired = False
        if self.run_length >= self.window and not self.fired:
            self.fired = True
            return self.table.lookup(*pair)
        return None


def debounce(
    stream: list[GesturePairToken], table: MappingTable, window: int = DEBOUNCE_FRAMES
) -> list[tuple[int, Token]]:
    """Confirmed (frame, token) events of a pair stream, in order."""
    deb = Debouncer(table, window)
    events = []
    for token in stream:
        confirmed = deb.update(token)
        if confirmed is not None:
            events.append((token.frame, confirmed))
    return events


# ---------------------------------------------------------------------------
# decoder FSM
# ---------------------------------------------------------------------------


class Phase(Enum):
    IDLE = "Idle"
    GOT_STOP = "GotStop"
    GOT_CONTD = "GotContd"
    TASK_CHOSEN = "TaskChosen"
    AWAIT_PROGRAM_NUM = "AwaitProgramNum"
    AWAIT_PARAM_NUM = "AwaitParamNum"
    AWAIT_DIRECTION = "AwaitDirection"
    AWAIT_SNAP_DURATION = "AwaitSnapDuration"
    ARMED = "Armed"


@dataclass(frozen=True)
class DecoderState:
    phase: Phase = Phase.IDLE
    task: str | None = None
    digits: str = ""
    direction: str | None = None

    def reset(self) -> "DecoderState":
        return DecoderState()


def _number(digits: str) -> int:
    return int(digits)


def step_fsm(
    state: DecoderState, token: Token
) -> tuple[DecoderState, Instruction | None]:
    """Pure transition function; emits an instruction only on a valid GO."""
    kind = token.kind

    if kind is TokenKind.GO:
        if state.phase is Phase.IDLE:
            return state, None
        instruction = _finish(state)
        return state.reset(), instruction

    if state.phase is Phase.IDLE:
        if kind is TokenKind.STOP:
            return DecoderState(phase=Phase.GOT_STOP), None
        if kind is TokenKind.CONTD:
            return DecoderState(phase=Phase.GOT_CONTD), None
        return state, None

    if state.phase is Phase.GOT_STOP:
        if kind in TASK_KINDS:
            return replace(state, phase=Phase.TASK_CHOSEN, task=kind.value), None
        if kind is TokenKind.EXECUTE:
            return replace(state, phase=Phase.AWAIT_PROGRAM_NUM, task="EXECUTE"), None
        return state, None

    if state.phase is Phase.GOT_CONTD:
        if kind is TokenKind.SNAPSHOT:
            return replace(state, phase=Phase.AWAIT_SNAP_DURATION), None
        if kind is TokenKind.PARAM:
            return replace(state, phase=Phase.AWAIT_PARAM_NUM), None
        return state, None

    if state.phase in (Phase.TASK_CHOSEN, Phase.AWAIT_PROGRAM_NUM, Phase.AWAIT_SNAP_DURATION):
        if kind is TokenKind.DIGIT:
            return replace(state, digits=state.digits + str(token.digit)), None
        return state, None

    if state.phase is Phase.AWAIT_PARAM_NUM:
        if kind is TokenKind.DIGIT:
            return (
                replace(
                    state,
                    phase=Phase.AWAIT_DIRECTION,
                    digits=state.digits + str(token.digit),
                ),
                None,
            )
        return state, None

    if state.phase is Phase.AWAIT_DIRECTION:
        if kind is TokenKind.DIGIT:
            return replace(state, digits=state.digits + str(token.digit)), None
        if kind in (TokenKind.INCREASE, TokenKind.DECREASE):
            return replace(state, phase=Phase.ARMED, direction=kind.value), None
        return state, None

    # Phase.ARMED: only GO (handled above) does anything
    return state, None


def _finish(state: DecoderState) -> Instruction | None:
    """Instruction for a GO arriving in ``state``; None if ungrammatical."""
    if state.phase is Phase.TASK_CHOSEN:
        duration = _number(state.digits) if state.digits else None
        if duration is not None and duration < 1:
            return None
        return TaskSwitch(task=state.task, duration_s=duration)
    if state.phase is Phase.AWAIT_PROGRAM_NUM and state.digits:
        return TaskSwitch(task="EXECUTE", program=_number(state.digits))
    if state.phase is Phase.AWAIT_SNAP_DURATION and state.digits:
        duration = _number(state.digits)
        return Snapshot(duration_s=duration) if duration >= 1 else None
    if state.phase is Phase.ARMED:
        return ParamReconfig(param=_number(state.digits), direction=state.direction)
    return None


class StreamDecoder:
    """Debounce plus FSM over one pair stream, with an idle-reset timeout."""

    def __init__(
        self,
        table: MappingTable,
        window: int = DEBOUNCE_FRAMES,
        idle_timeout: int = IDLE_TIMEOUT_FRAMES,
    ):
        self.debouncer = Debouncer(table, window)
        self.state = DecoderState()
        self.idle_timeout = idle_timeout
        self.frames_since_confirmed = 0

    def feed(self, token: GesturePairToken) -> Instruction | None:
        confirmed = self.debouncer.update(token)
        if confirmed is None:
            if self.state.phase is not Phase.IDLE:
                self.frames_since_confirmed += 1
                if self.frames_since_confirmed >= self.idle_timeout:
                    self.state = self.state.reset()
                    self.frames_since_confirmed = 0
            return None
        self.frames_since_confirmed = 0
        self.state, instruction = step_fsm(self.state, confirmed)
        if instruction is not None:
            instruction = replace(instruction, emitted_at_frame=token.frame)
        return instruction


def decode(
    stream: list[GesturePairToken],
    table: MappingTable,
    window: int = DEBOUNCE_FRAMES,
) -> list[Instruction]:
    """Decode a whole pair stream into instructions, in emission order."""
    decoder = StreamDecoder(table, window)
    out = []
    for token in stream:
        instruction = decoder.feed(token)
        if instruction is not None:
            out.append(instruction)
    return out


def decode_tokens(tokens: list[Token]) -> list[Instruction]:
    """Run the FSM over an already-confirmed token sequence."""
    state = DecoderState()
    out = []
    for token in tokens:
        state, instruction = step_fsm(state, token)
        if instruction is not None:
            out.append(instruction)
    return out


def instruction_from_record(rec: dict) -> Instruction:
    kind = rec.get("type")
    if kind == "task_switch":
        return TaskSwitch(
            task=rec["task"],
            duration_s=rec.get("duration_s"),
            program=rec.get("program"),
            emitted_at_frame=rec.get("emitted_at_frame"),
        )
    if kind == "param_reconfig":
        return ParamReconfig(
            param=rec["param"],
            direction=rec["direction"],
            emitted_at_frame=rec.get("emitted_at_frame"),
        )
    if kind == "snapshot":
        return Snapshot(
            duration_s=rec["duration_s"], emitted_at_frame=rec.get("emitted_at_frame")
        )
    raise ValidationError(f"unknown instruction type {kind!r}")

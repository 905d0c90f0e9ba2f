"""Canonical data model for annotated dialogue corpora.

Corpora are UTF-8 line-delimited JSON, one dialogue per line. Parsing is
strictly structural (field presence, types, enum membership); semantic
invariants (role alternation, alignment partitions, token/duration bounds)
are checked separately by ``validate_dialogue`` and never raise.

Serialization is canonical: fixed key order, compact separators, sorted
multi-tag sets. ``parse -> serialize -> parse`` is the identity on valid
corpora and serialization is byte-stable.
"""
import json
import math
from dataclasses import dataclass, field

from seqforge.captions import CaptionRecord
from seqforge.reporting import ValidationReport

LANGUAGES = ("zh", "en", "ja", "ko", "other")
SOURCES = ("real_life", "synthetic", "podcast", "audiobook", "short_utterance")
ROLES = ("user", "assistant")
FLAG_KINDS = (
    "logic_contradiction_correctable",
    "logic_contradiction_severe",
    "missing_context",
    "clean",
)

ADAPTER_FRAME_RATE_HZ = 12.5
ENCODER_FRAME_RATE_HZ = 25.0


@dataclass
class AudioTokenSpan:
    """Discrete speech tokens for one utterance (ids are opaque, >= 0)."""

    token_ids: list[int]
    frame_rate_hz: float
    duration_s: float

    @property
    def n_tokens(self) -> int:
        return len(self.token_ids)


@dataclass
class AlignmentSpan:
    """Sub-sentence alignment: [start, end) character and token offsets."""

    text_range: tuple[int, int]
    audio_range: tuple[int, int]
    index: int


@dataclass
class QualityFlag:
    """Cleaning-pipeline routing flag.

    Spans locate problematic text as (turn_index, [start, end)) pairs;
    severe contradictions must carry at least one.
    """

    kind: str
    spans: list[tuple[int, tuple[int, int]]] = field(default_factory=list)


@dataclass
class Turn:
    role: str
    speaker_id: str
    text: str
    audio: AudioTokenSpan | None = None
    alignment: list[AlignmentSpan] = field(default_factory=list)
    caption: CaptionRecord | None = None


@dataclass
class Dialogue:
    id: str
    turns: list[Turn]
    language: str = "en"
    source: str = "real_life"
    quality_flags: list[QualityFlag] = field(default_factory=list)


@dataclass(frozen=True)
class Reject:
    line_number: int
    reason: str


@dataclass
class ParseResult:
    dialogues: list[Dialogue]
    rejects: list[Reject]


class SchemaError(ValueError):
    pass


# --------------------------------------------------------------------------
# frame / token arithmetic
# --------------------------------------------------------------------------

def downsample_frames(n_frames: int) -> int:
    """Frame count after 2x temporal pooling (25 Hz -> 12.5 Hz).

    Odd counts are padded by one frame before pooling, so no content is
    dropped: the result is ceil(n_frames / 2).
    """
    if n_frames < 0:
        raise ValueError(f"frame count must be >= 0, got {n_frames}")
    return (n_frames + 1) // 2


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def tokens_for_hours(hours: float, rate_hz: float = ADAPTER_FRAME_RATE_HZ) -> int:
    """Token count for a duration in hours at a token rate in Hz."""
    if hours < 0:
        raise ValueError(f"hours must be >= 0, got {hours}")
    if rate_hz <= 0:
        raise ValueError(f"rate_hz must be > 0, got {rate_hz}")
    return _round_half_away(hours * 3600.0 * rate_hz)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise SchemaError(f"{path}: missing field {key!r}")
    return doc[key]


def _expect_str(value, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"{path}: expected string, got {type(value).__name__}")
    return value


def _expect_enum(value, allowed, path: str) -> str:
    value = _expect_str(value, path)
    if value not in allowed:
        raise SchemaError(f"{path}: {value!r} not one of {list(allowed)}")
    return value


def _expect_list(value, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(f"{path}: expected array, got {type(value).__name__}")
    return value


def _expect_pair(value, path: str) -> tuple[int, int]:
    value = _expect_list(value, path)
    if len(value) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise SchemaError(f"{path}: expected [int, int]")
    return value[0], value[1]


def _parse_audio(doc, path: str) -> AudioTokenSpan:
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected object")
    ids = _expect_list(_require(doc, "token_ids", path), f"{path}.token_ids")
    if not all(isinstance(t, int) and not isinstance(t, bool) for t in ids):
        raise SchemaError(f"{path}.token_ids: expected integers")
    rate = _require(doc, "frame_rate_hz", path)
    dur = _require(doc, "duration_s", path)
    if not isinstance(rate, (int, float)) or not isinstance(dur, (int, float)):
        raise SchemaError(f"{path}: frame_rate_hz/duration_s must be numbers")
    return AudioTokenSpan(token_ids=list(ids), frame_rate_hz=float(rate), duration_s=float(dur))


def _parse_alignment(docs, path: str) -> list[AlignmentSpan]:
    spans = []
    for k, item in enumerate(_expect_list(docs, path)):
        p = f"{path}[{k}]"
        if not isinstance(item, dict):
            raise SchemaError(f"{p}: expected object")
        index = _require(item, "index", p)
        if not isinstance(index, int) or isinstance(index, bool):
            raise SchemaError(f"{p}.index: expected integer")
        spans.append(
            AlignmentSpan(
                text_range=_expect_pair(_require(item, "text_range", p), f"{p}.text_range"),
                audio_range=_expect_pair(_require(item, "audio_range", p), f"{p}.audio_range"),
                index=index,
            )
        )
    return spans


def _parse_flag(doc, path: str) -> QualityFlag:
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected object")
    kind = _expect_enum(_require(doc, "kind", path), FLAG_KINDS, f"{path}.kind")
    spans = []
    for k, item in enumerate(_expect_list(doc.get("spans", []), f"{path}.spans")):
        p = f"{path}.spans[{k}]"
        item = _expect_list(item, p)
        if len(item) != 2:
            raise SchemaError(f"{p}: expected [turn_index, [start, end]]")
        turn_index = item[0]
        if not isinstance(turn_index, int) or isinstance(turn_index, bool):
            raise SchemaError(f"{p}: turn index must be an integer")
        spans.append((turn_index, _expect_pair(item[1], f"{p}[1]")))
    return QualityFlag(kind=kind, spans=spans)


def _parse_turn(doc, path: str) -> Turn:
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected object")
    role = _expect_enum(_require(doc, "role", path), ROLES, f"{path}.role")
    speaker = _expect_str(_require(doc, "speaker_id", path), f"{path}.speaker_id")
    text = _expect_str(_require(doc, "text", path), f"{path}.text")
    audio = None
    if doc.get("audio") is not None:
        audio = _parse_audio(doc["audio"], f"{path}.audio")
    alignment = _parse_alignment(doc.get("alignment", []), f"{path}.alignment")
    caption = None
    if doc.get("caption") is not None:
        if not isinstance(doc["caption"], dict):
            raise SchemaError(f"{path}.caption: expected object")
        caption = CaptionRecord.from_json_dict(doc["caption"])
    return Turn(role=role, speaker_id=speaker, text=text, audio=audio,
                alignment=alignment, caption=caption)


def parse_dialogue(doc: dict, path: str = "dialogue") -> Dialogue:
    """Structural parse of one dialogue object. Raises SchemaError."""
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected object")
    did = _expect_str(_require(doc, "id", path), f"{path}.id")
    language = _expect_enum(_require(doc, "language", path), LANGUAGES, f"{path}.language")
    source = _expect_enum(_require(doc, "source", path), SOURCES, f"{path}.source")
    flags = [_parse_flag(f, f"{path}.quality_flags[{k}]")
             for k, f in enumerate(_expect_list(doc.get("quality_flags", []), f"{path}.quality_flags"))]
    turns = [_parse_turn(t, f"{path}.turns[{k}]")
             for k, t in enumerate(_expect_list(_require(doc, "turns", path), f"{path}.turns"))]
    return Dialogue(id=did, turns=turns, language=language, source=source, quality_flags=flags)


def parse_corpus(path) -> ParseResult:
    """Parse a line-delimited corpus file.

    Malformed lines go to the rejects report with line number and reason;
    they are never silently dropped. Unreadable files raise.
    """
    dialogues: list[Dialogue] = []
    rejects: list[Reject] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                doc = json.loads(stripped)
            except json.JSONDecodeError as exc:
                rejects.append(Reject(line_no, f"invalid JSON: {exc.msg}"))
                continue
            try:
                dialogues.append(parse_dialogue(doc, path="dialogue"))
            except SchemaError as exc:
                rejects.append(Reject(line_no, str(exc)))
    return ParseResult(dialogues=dialogues, rejects=rejects)


# --------------------------------------------------------------------------
# serialization (canonical key order, compact)
# --------------------------------------------------------------------------

def _audio_dict(a: AudioTokenSpan) -> dict:
    return {"token_ids": a.token_ids, "frame_rate_hz": a.frame_rate_hz, "duration_s": a.duration_s}


def _turn_dict(t: Turn) -> dict:
    doc = {"role": t.role, "speaker_id": t.speaker_id, "text": t.text}
    if t.audio is not None:
        doc["audio"] = _audio_dict(t.audio)
    doc["alignment"] = [
        {"text_range": list(s.text_range), "audio_range": list(s.audio_range), "index": s.index}
        for s in t.alignment
    ]
    if t.caption is not None:
        doc["caption"] = t.caption.to_json_dict()
    return doc


def dialogue_to_dict(d: Dialogue) -> dict:
    return {
        "id": d.id,
        "language": d.language,
        "source": d.source,
        "quality_flags": [
            {"kind": f.kind, "spans": [[ti, list(rng)] for ti, rng in f.spans]}
            for f in d.quality_flags
        ],
        "turns": [_turn_dict(t) for t in d.turns],
    }


def serialize_dialogue(d: Dialogue) -> str:
    return json.dumps(dialogue_to_dict(d), ensure_ascii=False, separators=(",", ":"))


def write_corpus(dialogues, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in dialogues:
            fh.write(serialize_dialogue(d))
            fh.write("\n")


# --------------------------------------------------------------------------
# validation (never raises)
# --------------------------------------------------------------------------

def _validate_audio(report, audio: AudioTokenSpan, path: str) -> None:
    if any(t < 0 for t in audio.token_ids):
        report.add(f"{path}.token_ids", "token ids must be >= 0")
    if audio.frame_rate_hz <= 0:
        report.add(f"{path}.frame_rate_hz", "frame rate must be > 0")
    if audio.duration_s < 0:
        report.add(f"{path}.duration_s", "duration must be >= 0")
    else:
        expected = _round_half_away(audio.duration_s * audio.frame_rate_hz)
        if abs(audio.n_tokens - expected) > 1:
            report.add(
                path,
                f"token count {audio.n_tokens} vs duration-derived {expected} "
                f"exceeds the +/-1 rounding bound",
            )


def _validate_alignment(report, turn: Turn, path: str) -> None:
    spans = turn.alignment
    if not spans:
        return
    text_len = len(turn.text)
    n_tokens = turn.audio.n_tokens if turn.audio is not None else None
    prev_text_end = 0
    prev_audio_end = None
    for k, span in enumerate(spans):
        p = f"{path}.alignment[{k}]"
        ts, te = span.text_range
        if span.index != k:
            report.add(p, f"index {span.index} does not match position {k}")
        if ts >= te:
            report.add(f"{p}.text_range", "text range must be non-empty")
        if ts < 0 or te > text_len:
            report.add(f"{p}.text_range", f"range [{ts},{te}) outside text of length {text_len}")
        if ts < prev_text_end:
            report.add(f"{p}.text_range", f"overlaps previous span ending at {prev_text_end}")
        elif ts > prev_text_end:
            report.add(f"{p}.text_range", f"gap after previous span ending at {prev_text_end}")
        prev_text_end = max(prev_text_end, te)
        aus, aue = span.audio_range
        if aus > aue or aus < 0:
            report.add(f"{p}.audio_range", f"malformed range [{aus},{aue})")
        if n_tokens is None:
            if aue != aus:
                report.add(f"{p}.audio_range", "non-empty audio range on a turn without audio")
        else:
            if aue > n_tokens:
                report.add(f"{p}.audio_range", f"range end {aue} beyond {n_tokens} tokens")
            if prev_audio_end is not None and aus < prev_audio_end:
                report.add(f"{p}.audio_range", "audio ranges must be monotonically increasing")
            prev_audio_end = aue
    if spans and prev_text_end != text_len and all(s.text_range[0] < s.text_range[1] for s in spans):
        report.add(f"{path}.alignment", f"spans cover [0,{prev_text_end}) but text has length {text_len}")


def validate_dialogue(d: Dialogue) -> ValidationReport:
    """Check every type invariant; empty report iff the dialogue is valid."""
    report = ValidationReport()
    if not d.id:
        report.add("id", "empty id")
    if not d.turns:
        report.add("turns", "dialogue must have at least one turn")
    for i, turn in enumerate(d.turns):
        path = f"turns[{i}]"
        expected_role = ROLES[i % 2]
        if turn.role != expected_role:
            report.add(f"{path}.role",
                       f"role alternation violated: expected {expected_role!r}, got {turn.role!r}")
        if turn.audio is not None:
            _validate_audio(report, turn.audio, f"{path}.audio")
        _validate_alignment(report, turn, path)
    for k, flag in enumerate(d.quality_flags):
        path = f"quality_flags[{k}]"
        if flag.kind == "logic_contradiction_severe" and not flag.spans:
            report.add(path, "severe contradiction flags must carry at least one span")
        if flag.kind == "clean" and flag.spans:
            report.add(path, "clean flags must not carry spans")
        for j, (turn_index, (s, e)) in enumerate(flag.spans):
            p = f"{path}.spans[{j}]"
            if turn_index < 0 or turn_index >= len(d.turns):
                report.add(p, f"turn index {turn_index} out of range")
                continue
            text_len = len(d.turns[turn_index].text)
            if s < 0 or e > text_len or s >= e:
                report.add(p, f"text range [{s},{e}) invalid for turn of length {text_len}")
    return report


def validate_corpus(dialogues) -> ValidationReport:
    """Per-dialogue invariants plus corpus-level id uniqueness."""
    report = ValidationReport()
    seen: dict[str, int] = {}
    for n, d in enumerate(dialogues):
        sub = validate_dialogue(d)
        for v in sub.violations:
            report.add(f"{d.id or n}.{v.path}", v.message)
        if d.id in seen:
            report.add(f"{d.id}.id", f"duplicate id (first seen at record {seen[d.id]})")
        else:
            seen[d.id] = n
    return report

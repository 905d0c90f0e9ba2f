"""Speech-generator training sequences.

Every sequence starts with reference audio wrapped in REF_START/REF_END,
followed by role-token blocks. Three organization modes cover distinct
context regimes: dialogue (dyadic, explicit speaker roles), long_text
(single-speaker monologue, one continuous block) and standard_sentence
(single utterance, no context).

Reference audio is always an independent segment of the same speaker, never
a segment of the training sample itself. Assistant content is emitted as a
repeating n-text/m-speech interleave so synthesis can start from partial
text; a run-level shift token marks every stream switch.

Special-token ids are negative so they can never collide with the opaque
non-negative speech/text id spaces. Text ids are Unicode scalar values of
the turn text (tokenizer-free symbolic stand-in).
"""
import json
from dataclasses import dataclass, field
from importlib import resources

from seqforge.corpus import AudioTokenSpan, Dialogue
from seqforge.seeding import DetRng, derive_seed

STREAM_SPECIAL = "special"
STREAM_TEXT = "text"
STREAM_SPEECH = "speech"

MODES = ("dialogue", "long_text", "standard_sentence")


def load_special_tokens(path=None) -> dict[str, int]:
    if path is None:
        raw = resources.files("seqforge.data").joinpath("special_tokens.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    doc = json.loads(raw)
    tokens = {str(k): int(v) for k, v in doc["tokens"].items()}
    ids = list(tokens.values())
    if len(set(ids)) != len(ids):
        raise ValueError("special token ids must be pairwise distinct")
    if any(v >= 0 for v in ids):
        raise ValueError("special token ids must be negative (payload ids are >= 0)")
    return tokens


SPECIAL_TOKENS = load_special_tokens()
SPECIAL_NAMES = {v: k for k, v in SPECIAL_TOKENS.items()}


class AssembleError(ValueError):
    pass


class NoReferenceError(LookupError):
    pass


class TalkerParseError(ValueError):
    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (token index {index})")
        self.index = index


@dataclass(frozen=True)
class StreamRatio:
    n_text: int
    m_speech: int

    def __post_init__(self):
        if self.n_text < 1 or self.m_speech < 1:
            raise ValueError(f"ratio parts must be >= 1, got {self.n_text}:{self.m_speech}")

    @classmethod
    def parse(cls, text: str) -> "StreamRatio":
        n, _, m = text.partition(":")
        return cls(int(n), int(m))

    def __str__(self) -> str:
        return f"{self.n_text}:{self.m_speech}"


@dataclass(frozen=True)
class ReferenceSegment:
    dialogue_id: str
    turn_index: int
    speaker_id: str
    span: AudioTokenSpan


@dataclass
class TalkerSequence:
    mode: str
    tokens: list[tuple[str, int]]
    speech_loss_mask: list[bool]
    manifest: dict = field(default_factory=dict)


@dataclass
class Block:
    role: str
    text_ids: list[int]
    speech_ids: list[int]


@dataclass
class ParsedTalker:
    ref: list[int]
    blocks: list[Block]


# --------------------------------------------------------------------------
# reference selection
# --------------------------------------------------------------------------

def build_reference_index(dialogues) -> dict[str, list[ReferenceSegment]]:
    """speaker_id -> all audio segments in the corpus, in stable order."""
    index: dict[str, list[ReferenceSegment]] = {}
    for d in dialogues:
        for i, turn in enumerate(d.turns):
            if turn.audio is not None:
                index.setdefault(turn.speaker_id, []).append(
                    ReferenceSegment(d.id, i, turn.speaker_id, turn.audio)
                )
    return index


def select_reference(
    speaker_id: str,
    index: dict[str, list[ReferenceSegment]],
    current_sample_id: str,
    seed: int,
) -> ReferenceSegment:
    """Seeded pick of an independent same-speaker segment.

    Segments belonging to the current sample are excluded entirely; a speaker
    with no independent segment raises NoReferenceError (callers skip and log
    the sample rather than self-referencing).
    """
    candidates = [seg for seg in index.get(speaker_id, ())
                  if seg.dialogue_id != current_sample_id]
    if not candidates:
        raise NoReferenceError(
            f"speaker {speaker_id!r} has no independent segment outside "
            f"sample {current_sample_id!r}"
        )
    rng = DetRng(derive_seed(seed, speaker_id, current_sample_id, "reference"))
    return candidates[rng.below(len(candidates))]


# --------------------------------------------------------------------------
# stream interleaving
# --------------------------------------------------------------------------

def stream_interleave(
    text_ids: list[int],
    speech_ids: list[int],
    ratio: StreamRatio,
) -> list[tuple[str, int]]:
    """Merge two id streams as repeating n-text/m-speech runs.

    When one stream is exhausted the remainder of the other is emitted
    contiguously. Both streams keep their internal order; nothing is lost.
    """
    out: list[tuple[str, int]] = []
    ti, si = 0, 0
    nt, ns = len(text_ids), len(speech_ids)
    while ti < nt or si < ns:
        take = min(ratio.n_text, nt - ti) if si < ns else nt - ti
        for _ in range(take):
            out.append((STREAM_TEXT, text_ids[ti]))
            ti += 1
        take = min(ratio.m_speech, ns - si) if ti < nt else ns - si
        for _ in range(take):
            out.append((STREAM_SPEECH, speech_ids[si]))
            si += 1
    return out


def text_ids_for(text: str) -> list[int]:
    return [ord(c) for c in text]


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def _emit_runs(tokens, mask, content, loss_on_speech: bool, specials) -> None:
    """Append interleaved content, inserting a shift token at stream switches."""
    prev_stream = None
    for stream, tid in content:
        if prev_stream is not None and stream != prev_stream:
            shift = specials["TEXT_SHIFT"] if stream == STREAM_TEXT else specials["SPEECH_SHIFT"]
            tokens.append((STREAM_SPECIAL, shift))
            mask.append(False)
        tokens.append((stream, tid))
        mask.append(loss_on_speech and stream == STREAM_SPEECH)
        prev_stream = stream


def _pick_ratio(base: StreamRatio, choices, rng) -> StreamRatio:
    if not choices:
        return base
    return choices[rng.below(len(choices))]


def assemble(
    dialogue: Dialogue,
    mode: str,
    ratio: StreamRatio,
    seed: int,
    reference: ReferenceSegment,
    ratio_choices: list[StreamRatio] | None = None,
) -> TalkerSequence:
    """Build one talker sequence in the given organization mode.

    dialogue mode needs dyadic role structure (>= 2 speakers); long_text a
    single speaker; standard_sentence exactly one utterance. Assistant-side
    (target-voice) turns must carry audio. When ratio_choices is given, the
    per-block interleave ratio is a seeded draw from it.
    """
    if mode not in MODES:
        raise AssembleError(f"unknown mode {mode!r}")
    if not dialogue.turns:
        raise AssembleError(f"dialogue {dialogue.id!r} has no turns")
    speakers = {t.speaker_id for t in dialogue.turns}
    if mode == "dialogue" and len(speakers) < 2:
        raise AssembleError("dialogue mode needs at least two speakers")
    if mode == "long_text" and len(speakers) != 1:
        raise AssembleError("long_text mode needs a single speaker")
    if mode == "standard_sentence" and len(dialogue.turns) != 1:
        raise AssembleError("standard_sentence mode takes exactly one utterance")
    if reference.dialogue_id == dialogue.id:
        raise AssembleError("reference audio must come from an independent sample")

    rng = DetRng(derive_seed(seed, dialogue.id, "talker"))
    specials = SPECIAL_TOKENS
    tokens: list[tuple[str, int]] = [(STREAM_SPECIAL, specials["REF_START"])]
    mask: list[bool] = [False]
    for tid in reference.span.token_ids:
        tokens.append((STREAM_SPEECH, tid))
        mask.append(False)
    tokens.append((STREAM_SPECIAL, specials["REF_END"]))
    mask.append(False)

    def close_block():
        tokens.append((STREAM_SPECIAL, specials["EOS"]))
        mask.append(False)

    if mode == "long_text":
        text_ids: list[int] = []
        speech_ids: list[int] = []
        for i, turn in enumerate(dialogue.turns):
            if turn.audio is None:
                raise AssembleError(f"long_text turn {i} has no audio")
            text_ids.extend(text_ids_for(turn.text))
            speech_ids.extend(turn.audio.token_ids)
        tokens.append((STREAM_SPECIAL, specials["ROLE_ASSISTANT"]))
        mask.append(False)
        content = stream_interleave(text_ids, speech_ids, _pick_ratio(ratio, ratio_choices, rng))
        _emit_runs(tokens, mask, content, loss_on_speech=True, specials=specials)
        close_block()
    elif mode == "standard_sentence":
        turn = dialogue.turns[0]
        if turn.audio is None:
            raise AssembleError("standard_sentence utterance has no audio")
        tokens.append((STREAM_SPECIAL, specials["ROLE_ASSISTANT"]))
        mask.append(False)
        content = stream_interleave(text_ids_for(turn.text), turn.audio.token_ids,
                                    _pick_ratio(ratio, ratio_choices, rng))
        _emit_runs(tokens, mask, content, loss_on_speech=True, specials=specials)
        close_block()
    else:
        for i, turn in enumerate(dialogue.turns):
            if turn.role == "assistant":
                if turn.audio is None:
                    raise AssembleError(f"assistant turn {i} has no audio")
                tokens.append((STREAM_SPECIAL, specials["ROLE_ASSISTANT"]))
                mask.append(False)
                content = stream_interleave(text_ids_for(turn.text), turn.audio.token_ids,
                                            _pick_ratio(ratio, ratio_choices, rng))
                _emit_runs(tokens, mask, content, loss_on_speech=True, specials=specials)
            else:
                tokens.append((STREAM_SPECIAL, specials["ROLE_USER"]))
                mask.append(False)
                if turn.audio is not None:
                    content = [(STREAM_SPEECH, t) for t in turn.audio.token_ids]
                else:
                    content = [(STREAM_TEXT, t) for t in text_ids_for(turn.text)]
                _emit_runs(tokens, mask, content, loss_on_speech=False, specials=specials)
            close_block()

    manifest = {
        "dialogue_id": dialogue.id,
        "mode": mode,
        "ratio": str(ratio),
        "seed": seed,
        "ref_origin": [reference.dialogue_id, reference.turn_index],
    }
    return TalkerSequence(mode=mode, tokens=tokens, speech_loss_mask=mask, manifest=manifest)


# --------------------------------------------------------------------------
# parsing (grammar round-trip oracle)
# --------------------------------------------------------------------------

def parse_sequence(tokens: list[tuple[str, int]]) -> ParsedTalker:
    """Inverse of assemble's layout; raises TalkerParseError with the index."""
    specials = SPECIAL_TOKENS
    names = SPECIAL_NAMES
    if not tokens or tokens[0] != (STREAM_SPECIAL, specials["REF_START"]):
        raise TalkerParseError("sequence must begin with REF_START", 0)

    ref: list[int] = []
    i = 1
    while i < len(tokens):
        stream, tid = tokens[i]
        if stream == STREAM_SPECIAL:
            if tid == specials["REF_END"]:
                break
            raise TalkerParseError(f"unexpected {names.get(tid, tid)} inside reference", i)
        if stream != STREAM_SPEECH:
            raise TalkerParseError("reference section admits speech tokens only", i)
        ref.append(tid)
        i += 1
    else:
        raise TalkerParseError("REF_END not found", len(tokens) - 1)
    i += 1  # consume REF_END

    blocks: list[Block] = []
    while i < len(tokens):
        stream, tid = tokens[i]
        if stream != STREAM_SPECIAL or tid not in (specials["ROLE_USER"], specials["ROLE_ASSISTANT"]):
            raise TalkerParseError("expected a role token to open a block", i)
        role = "user" if tid == specials["ROLE_USER"] else "assistant"
        i += 1
        block = Block(role=role, text_ids=[], speech_ids=[])
        current: str | None = None
        pending_shift: str | None = None
        while i < len(tokens):
            stream, tid = tokens[i]
            if stream == STREAM_SPECIAL:
                if tid == specials["EOS"]:
                    if pending_shift is not None:
                        raise TalkerParseError("dangling stream shift before EOS", i)
                    i += 1
                    break
                if tid == specials["TEXT_SHIFT"]:
                    pending_shift = STREAM_TEXT
                elif tid == specials["SPEECH_SHIFT"]:
                    pending_shift = STREAM_SPEECH
                else:
                    raise TalkerParseError(f"unexpected {names.get(tid, tid)} inside block", i)
                if current is None:
                    raise TalkerParseError("stream shift before any payload", i)
                if pending_shift == current:
                    raise TalkerParseError("shift token does not switch streams", i)
                i += 1
                continue
            if pending_shift is not None:
                if stream != pending_shift:
                    raise TalkerParseError("payload stream contradicts shift token", i)
                pending_shift = None
            elif current is not None and stream != current:
                raise TalkerParseError("stream switch without a shift token", i)
            if stream == STREAM_TEXT:
                block.text_ids.append(tid)
            elif stream == STREAM_SPEECH:
                block.speech_ids.append(tid)
            else:
                raise TalkerParseError(f"unknown stream {stream!r}", i)
            current = stream
            i += 1
        else:
            raise TalkerParseError("block not terminated by EOS", len(tokens) - 1)
        blocks.append(block)
    if not blocks:
        raise TalkerParseError("sequence has no blocks", len(tokens) - 1)
    return ParsedTalker(ref=ref, blocks=blocks)


def sequence_to_dict(seq: TalkerSequence) -> dict:
    return {
        "mode": seq.mode,
        "tokens": [[s, t] for s, t in seq.tokens],
        "speech_loss_mask": [1 if b else 0 for b in seq.speech_loss_mask],
        "manifest": seq.manifest,
    }


def serialize_sequence(seq: TalkerSequence) -> str:
    return json.dumps(sequence_to_dict(seq), ensure_ascii=False, separators=(",", ":"))

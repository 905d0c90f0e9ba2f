"""Talker sequences: reference selection, layout grammar, stream interleave."""
from collections import Counter

import pytest

from seqforge import synthetic
from seqforge.talker import (SPECIAL_TOKENS, AssembleError, NoReferenceError,
                             StreamRatio, TalkerParseError, assemble,
                             build_reference_index, parse_sequence,
                             select_reference, stream_interleave, text_ids_for)

from conftest import make_dialogue, make_turn
from seqforge.corpus import Dialogue


def corpus_with_shared_speakers(n=6, seed=7, **kw):
    dialogues = synthetic.synth_corpus(n, seed, **kw)
    for d in dialogues:
        for t in d.turns:
            t.speaker_id = "spk_u" if t.role == "user" else "spk_a"
    return dialogues


# --------------------------------------------------------------------------
# reference selection
# --------------------------------------------------------------------------

def test_two_segment_speaker_forced_choice():
    dialogues = corpus_with_shared_speakers(2)
    index = build_reference_index(dialogues)
    for seed in range(50):
        ref = select_reference("spk_a", index, dialogues[0].id, seed)
        assert ref.dialogue_id == dialogues[1].id


def test_singleton_speaker_raises_no_reference():
    dialogues = corpus_with_shared_speakers(1)
    index = build_reference_index(dialogues)
    with pytest.raises(NoReferenceError):
        select_reference("spk_a", index, dialogues[0].id, 3)


def test_selection_is_deterministic_per_seed():
    dialogues = corpus_with_shared_speakers(5)
    index = build_reference_index(dialogues)
    picks = [select_reference("spk_a", index, dialogues[0].id, 9).dialogue_id
             for _ in range(10)]
    assert len(set(picks)) == 1


def test_selection_montecarlo_near_uniform():
    # Speaker appears in 5 samples; the current one is excluded -> 4 candidates.
    dialogues = corpus_with_shared_speakers(5)
    index = build_reference_index(dialogues)
    current = dialogues[0].id
    counts = Counter(select_reference("spk_a", index, current, seed).dialogue_id
                     for seed in range(10_000))
    assert current not in counts
    assert len(counts) == 4
    for did, c in counts.items():
        assert abs(c / 10_000 - 0.25) < 0.02, (did, c)


# --------------------------------------------------------------------------
# stream interleave
# --------------------------------------------------------------------------

def test_interleave_single_block():
    text = list(range(1, 6))
    speech = list(range(101, 116))
    merged = stream_interleave(text, speech, StreamRatio(5, 15))
    assert merged == [("text", t) for t in text] + [("speech", s) for s in speech]


def test_interleave_two_rounds_enumerated():
    text = list(range(1, 11))
    speech = list(range(101, 131))
    merged = stream_interleave(text, speech, StreamRatio(5, 15))
    expected = ([("text", t) for t in text[:5]] + [("speech", s) for s in speech[:15]]
                + [("text", t) for t in text[5:]] + [("speech", s) for s in speech[15:]])
    assert merged == expected


def test_interleave_empty_text_is_speech_verbatim():
    speech = [9, 8, 7]
    assert stream_interleave([], speech, StreamRatio(2, 3)) == [("speech", s) for s in speech]


def test_interleave_preserves_order_and_multiset():
    import random
    rng = random.Random(4)
    for _ in range(300):
        text = [rng.randrange(100) for _ in range(rng.randrange(0, 30))]
        speech = [rng.randrange(100, 200) for _ in range(rng.randrange(0, 30))]
        ratio = StreamRatio(rng.randrange(1, 6), rng.randrange(1, 6))
        merged = stream_interleave(text, speech, ratio)
        assert [i for s, i in merged if s == "text"] == text
        assert [i for s, i in merged if s == "speech"] == speech
        assert len(merged) == len(text) + len(speech)


def test_ratio_validation_and_parse():
    with pytest.raises(ValueError):
        StreamRatio(0, 3)
    assert StreamRatio.parse("5:15") == StreamRatio(5, 15)
    assert str(StreamRatio(1, 3)) == "1:3"


# --------------------------------------------------------------------------
# assembly + parse round trip
# --------------------------------------------------------------------------

def _reference_for(dialogues, target, speaker="spk_a"):
    index = build_reference_index(dialogues)
    return select_reference(speaker, index, target.id, 1)


def test_standard_sentence_layout_with_empty_text():
    dialogues = corpus_with_shared_speakers(3, n_turns=2)
    single = Dialogue(id="single", turns=[make_turn("user", text="", speaker="spk_a")])
    single.turns[0].alignment = []
    ref = _reference_for(dialogues, single)
    seq = assemble(single, "standard_sentence", StreamRatio(5, 15), 3, ref)
    specials = SPECIAL_TOKENS
    ids = [t for _, t in seq.tokens]
    n_ref = len(ref.span.token_ids)
    assert ids[0] == specials["REF_START"]
    assert ids[1:1 + n_ref] == ref.span.token_ids
    assert ids[1 + n_ref] == specials["REF_END"]
    assert ids[2 + n_ref] == specials["ROLE_ASSISTANT"]
    assert ids[3 + n_ref:-1] == single.turns[0].audio.token_ids
    assert ids[-1] == specials["EOS"]
    parsed = parse_sequence(seq.tokens)
    assert len(parsed.blocks) == 1
    assert parsed.blocks[0].text_ids == []
    assert parsed.blocks[0].speech_ids == single.turns[0].audio.token_ids


def test_dialogue_mode_role_token_alternation():
    dialogues = corpus_with_shared_speakers(3, n_turns=4)
    ref = _reference_for(dialogues, dialogues[0])
    seq = assemble(dialogues[0], "dialogue", StreamRatio(5, 15), 3, ref)
    role_ids = {SPECIAL_TOKENS["ROLE_USER"]: "user", SPECIAL_TOKENS["ROLE_ASSISTANT"]: "assistant"}
    roles = [role_ids[t] for s, t in seq.tokens if s == "special" and t in role_ids]
    assert roles == ["user", "assistant", "user", "assistant"]


def test_empty_dialogue_is_an_error():
    dialogues = corpus_with_shared_speakers(2)
    ref = _reference_for(dialogues, dialogues[0])
    with pytest.raises(AssembleError):
        assemble(Dialogue(id="e", turns=[]), "dialogue", StreamRatio(5, 15), 1, ref)


def test_mode_preconditions():
    dialogues = corpus_with_shared_speakers(3, n_turns=2)
    ref = _reference_for(dialogues, dialogues[0])
    with pytest.raises(AssembleError, match="single speaker"):
        assemble(dialogues[0], "long_text", StreamRatio(5, 15), 1, ref)
    with pytest.raises(AssembleError, match="one utterance"):
        assemble(dialogues[0], "standard_sentence", StreamRatio(5, 15), 1, ref)
    mono = Dialogue(id="m", turns=[make_turn("user", speaker="solo")])
    with pytest.raises(AssembleError, match="two speakers"):
        assemble(mono, "dialogue", StreamRatio(5, 15), 1, ref)


def test_self_reference_is_rejected():
    dialogues = corpus_with_shared_speakers(2, n_turns=2)
    index = build_reference_index(dialogues)
    ref = select_reference("spk_a", index, dialogues[1].id, 1)  # -> from dialogues[0]
    with pytest.raises(AssembleError, match="independent"):
        assemble(dialogues[0], "dialogue", StreamRatio(5, 15), 1, ref)


def test_speech_loss_mask_covers_exactly_assistant_speech():
    dialogues = corpus_with_shared_speakers(3, n_turns=4)
    ref = _reference_for(dialogues, dialogues[0])
    seq = assemble(dialogues[0], "dialogue", StreamRatio(2, 6), 9, ref)
    ln = len(ref.span.token_ids)
    current_role = None
    for k, ((stream, _), masked) in enumerate(zip(seq.tokens, seq.speech_loss_mask)):
        if stream == "special":
            tid = seq.tokens[k][1]
            if tid == SPECIAL_TOKENS["ROLE_USER"]:
                current_role = "user"
            elif tid == SPECIAL_TOKENS["ROLE_ASSISTANT"]:
                current_role = "assistant"
        expected = (stream == "speech" and current_role == "assistant")
        assert masked == expected, (k, stream, current_role)
    # reference speech precedes any role token -> unmasked by the rule above
    assert not any(seq.speech_loss_mask[:ln + 2])


def _structural_blocks(d, mode):
    """Expected parse structure built directly from the dialogue."""
    blocks = []
    if mode == "long_text":
        text_ids = []
        speech_ids = []
        for t in d.turns:
            text_ids += text_ids_for(t.text)
            speech_ids += list(t.audio.token_ids)
        return [("assistant", text_ids, speech_ids)]
    if mode == "standard_sentence":
        t = d.turns[0]
        return [("assistant", text_ids_for(t.text), list(t.audio.token_ids))]
    for t in d.turns:
        if t.role == "assistant":
            blocks.append(("assistant", text_ids_for(t.text), list(t.audio.token_ids)))
        elif t.audio is not None:
            blocks.append(("user", [], list(t.audio.token_ids)))
        else:
            blocks.append(("user", text_ids_for(t.text), []))
    return blocks


@pytest.mark.parametrize("mode,kwargs", [
    ("dialogue", {"n_turns": 4, "segments_per_assistant": 2}),
    ("long_text", {"n_turns": 3}),
    ("standard_sentence", {"n_turns": 1}),
])
def test_parse_assemble_round_trip_randomized(mode, kwargs):
    dialogues = corpus_with_shared_speakers(1000, seed=42, **kwargs)
    if mode == "long_text":
        for d in dialogues:
            for t in d.turns:
                t.speaker_id = "spk_a"
                t.role = "user" if d.turns.index(t) % 2 == 0 else "assistant"
    index = build_reference_index(dialogues)
    speaker = "spk_u" if mode == "standard_sentence" else "spk_a"
    checked = 0
    for d in dialogues:
        ref = select_reference(speaker, index, d.id, 5)
        seq = assemble(d, mode, StreamRatio(5, 15), 5, ref)
        parsed = parse_sequence(seq.tokens)
        assert parsed.ref == ref.span.token_ids
        got = [(b.role, b.text_ids, b.speech_ids) for b in parsed.blocks]
        assert got == _structural_blocks(d, mode), d.id
        assert seq.manifest["ref_origin"][0] != d.id
        checked += 1
    assert checked == 1000


def test_parse_error_when_ref_end_missing():
    dialogues = corpus_with_shared_speakers(2, n_turns=2)
    ref = _reference_for(dialogues, dialogues[0])
    seq = assemble(dialogues[0], "dialogue", StreamRatio(5, 15), 1, ref)
    mutated = [t for t in seq.tokens if t != ("special", SPECIAL_TOKENS["REF_END"])]
    first_role = next(i for i, (s, t) in enumerate(mutated)
                      if s == "special" and t == SPECIAL_TOKENS["ROLE_USER"])
    with pytest.raises(TalkerParseError) as exc:
        parse_sequence(mutated)
    assert exc.value.index == first_role


def test_parse_error_on_shiftless_stream_switch():
    specials = SPECIAL_TOKENS
    tokens = [("special", specials["REF_START"]), ("speech", 4),
              ("special", specials["REF_END"]), ("special", specials["ROLE_ASSISTANT"]),
              ("text", 65), ("speech", 5), ("special", specials["EOS"])]
    with pytest.raises(TalkerParseError, match="without a shift"):
        parse_sequence(tokens)


def test_parse_minimal_sequence():
    specials = SPECIAL_TOKENS
    tokens = [("special", specials["REF_START"]), ("speech", 1),
              ("special", specials["REF_END"]), ("special", specials["ROLE_ASSISTANT"]),
              ("speech", 2), ("special", specials["EOS"])]
    parsed = parse_sequence(tokens)
    assert len(parsed.blocks) == 1
    assert parsed.blocks[0].speech_ids == [2]


def test_reference_leakage_freedom_over_corpus():
    dialogues = corpus_with_shared_speakers(200, seed=8, n_turns=2)
    index = build_reference_index(dialogues)
    for d in dialogues:
        ref = select_reference("spk_a", index, d.id, 77)
        assert ref.dialogue_id != d.id


def test_ratio_choices_draw_is_deterministic_and_parses():
    dialogues = corpus_with_shared_speakers(3, n_turns=4)
    ref = _reference_for(dialogues, dialogues[0])
    choices = [StreamRatio(2, 6), StreamRatio(4, 12)]
    a = assemble(dialogues[0], "dialogue", StreamRatio(5, 15), 3, ref, ratio_choices=choices)
    b = assemble(dialogues[0], "dialogue", StreamRatio(5, 15), 3, ref, ratio_choices=choices)
    assert a.tokens == b.tokens
    parse_sequence(a.tokens)

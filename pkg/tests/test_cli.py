"""CLI wiring: exit codes, manifests, determinism, integration paths."""
import json

import pytest

from seqforge import corpus as corpus_mod
from seqforge import synthetic
from seqforge.cli import run

from conftest import make_dialogue


def write_corpus(tmp_path, dialogues, name="corpus.jsonl"):
    path = tmp_path / name
    corpus_mod.write_corpus(dialogues, path)
    return path


def test_unknown_subcommand_exits_2(capsys):
    assert run(["nonsense"]) == 2


def test_missing_required_flag_exits_2(capsys):
    assert run(["validate"]) == 2


def test_validate_clean_corpus_exit_0(tmp_path, capsys):
    path = write_corpus(tmp_path, synthetic.synth_corpus(3, 1))
    assert run(["validate", "--corpus", str(path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["dialogues"] == 3 and not doc["violations"]


def test_validate_bad_corpus_exit_1(tmp_path, capsys):
    d = make_dialogue("d")
    d.turns[0].role = "assistant"  # breaks alternation
    path = write_corpus(tmp_path, [d])
    assert run(["validate", "--corpus", str(path)]) == 1


def test_validate_reject_lines_exit_1(tmp_path, capsys):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"id": "x"}\n', encoding="utf-8")
    assert run(["validate", "--corpus", str(path)]) == 1
    doc = json.loads(capsys.readouterr().out)
    assert doc["rejects"][0]["line"] == 1


def test_build_thinker_writes_manifest_and_sequences(tmp_path, capsys):
    path = write_corpus(tmp_path, synthetic.synth_corpus(4, 2))
    out = tmp_path / "thinker.jsonl"
    assert run(["build-thinker", "--corpus", str(path), "--seed", "7",
                "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    assert header["master_seed"] == 7
    assert header["counts"]["sequences"] == 4
    assert len(lines) == 5
    assert (tmp_path / "thinker.jsonl.manifest.json").exists()


def test_build_thinker_deterministic_across_runs_and_jobs(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write_corpus(tmp_path, synthetic.synth_corpus(30, 5, n_turns=4))
    outputs = []
    for name, jobs in (("a.jsonl", "1"), ("b.jsonl", "1"), ("c.jsonl", "2")):
        assert run(["build-thinker", "--corpus", "corpus.jsonl", "--seed", "9",
                    "--out", name, "--jobs", jobs]) == 0
        outputs.append((tmp_path / name).read_bytes().replace(name.encode(), b"OUT"))
    assert outputs[0] == outputs[1] == outputs[2]


def test_build_talker_runs_and_skips_singletons(tmp_path, capsys):
    dialogues = synthetic.synth_corpus(6, 3)
    for d in dialogues:
        for t in d.turns:
            t.speaker_id = "u" if t.role == "user" else "a"
    path = write_corpus(tmp_path, dialogues)
    out = tmp_path / "talker.jsonl"
    assert run(["build-talker", "--corpus", str(path), "--seed", "3",
                "--mode", "dialogue", "--ratio", "5:15", "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    assert header["counts"]["sequences"] == 6
    assert header["config"]["ratio"] == "5:15"


def test_clean_mock_writes_outcomes_and_deferred(tmp_path):
    dialogues = [
        synthetic.synth_dialogue(1, 0, flag_kind="clean"),
        synthetic.synth_dialogue(1, 1, flag_kind="logic_contradiction_severe"),
        synthetic.synth_dialogue(1, 2, flag_kind="logic_contradiction_correctable"),
    ]
    path = write_corpus(tmp_path, dialogues)
    out = tmp_path / "cleaned.jsonl"
    assert run(["clean", "--corpus", str(path), "--client", "mock",
                "--out", str(out)]) == 0
    cleaned = corpus_mod.parse_corpus(out)
    assert len(cleaned.dialogues) == 3 and not cleaned.rejects
    outcomes = [json.loads(line) for line in
                (tmp_path / "cleaned.jsonl.outcomes.jsonl").read_text().splitlines()]
    assert [o["branch"] for o in outcomes] == [
        "passthrough", "information_preservation", "logic_correction"]
    assert (tmp_path / "cleaned.jsonl.deferred.jsonl").read_text() == ""


def test_masks_flow_from_clean_into_build_thinker(tmp_path):
    dialogues = [synthetic.synth_dialogue(1, 1, flag_kind="logic_contradiction_severe",
                                          segments_per_assistant=3)]
    path = write_corpus(tmp_path, dialogues)
    cleaned = tmp_path / "cleaned.jsonl"
    assert run(["clean", "--corpus", str(path), "--out", str(cleaned)]) == 0
    built = tmp_path / "thinker.jsonl"
    assert run(["build-thinker", "--corpus", str(cleaned), "--seed", "1",
                "--p-user", "0.0", "--p-assistant", "0.0",
                "--masks", str(cleaned) + ".outcomes.jsonl",
                "--out", str(built)]) == 0
    record = json.loads(built.read_text().splitlines()[1])
    masked = [e for e in record["elements"] if not e["loss_target"]
              and e["role"] == "assistant"]
    assert masked, "masked segment should lose its loss target"


def test_plan_show_and_directive(tmp_path, capsys):
    assert run(["plan", "show"]) == 0
    capsys.readouterr()
    assert run(["plan", "directive", "--stage", "s1", "--step", "300",
                "--total", "1000"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["trainable"] == ["audio_adapter"]
    assert doc["lr"] == 4e-5


def test_stats_feeds_plan_budget_without_transformation(tmp_path, capsys):
    dialogues = synthetic.synth_corpus(2, 4, n_turns=1)
    # 10 s of audio per dialogue: 125 tokens at 12.5 Hz
    for d in dialogues:
        d.turns[0].audio.token_ids = list(range(125))
        d.turns[0].audio.duration_s = 10.0
        d.turns[0].alignment = [corpus_mod.AlignmentSpan(
            (0, len(d.turns[0].text)), (0, 125), 0)]
    path = write_corpus(tmp_path, dialogues)
    stats_out = tmp_path / "stats.json"
    assert run(["stats", "--corpus", str(path), "--out", str(stats_out)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["total_hours"] == pytest.approx(20 / 3600)
    assert doc["total_tokens_at_12p5hz"] == 250
    assert run(["plan", "budget", "--stats", str(stats_out)]) == 1  # desk-scale corpus fails budgets
    rows = json.loads(capsys.readouterr().out)
    assert any(r["status"] == "fail" for r in rows)
    assert any(r["status"] == "missing" for r in rows)


def test_loss_check_cli(capsys):
    assert run(["loss-check", "--cases", "5", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out


def test_eval_cer_and_only_yes(tmp_path, capsys):
    ref = tmp_path / "ref.txt"
    hyp = tmp_path / "hyp.txt"
    ref.write_text("hello world\ngood day\n", encoding="utf-8")
    hyp.write_text("hello word\ngood day\n", encoding="utf-8")
    assert run(["eval", "wer", "--ref", str(ref), "--hyp", str(hyp)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["errors"] == 1 and doc["reference_length"] == 4
    responses = tmp_path / "resp.txt"
    responses.write_text("yes\nYes.\nno\nyes!\n", encoding="utf-8")
    assert run(["eval", "only-yes", "--responses", str(responses)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["passes"] == 3 and doc["accuracy"] == pytest.approx(0.75)


def test_templates_expand_cli(tmp_path, capsys):
    registry = tmp_path / "registry.json"
    registry.write_text(json.dumps({
        "caption": {"languages": ["en"],
                    "slots": [{"alternatives": ["describe", "caption"]},
                              {"alternatives": ["the audio"]}]}}),
        encoding="utf-8")
    assert run(["templates", "expand", "--task", "caption", "--limit", "2",
                "--registry", str(registry)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["text"] == "describe the audio"


def test_manifest_config_hash_tracks_config_changes(tmp_path):
    path = write_corpus(tmp_path, synthetic.synth_corpus(2, 6))
    hashes = {}
    for name, p_user in (("x.jsonl", "0.5"), ("y.jsonl", "0.5"), ("z.jsonl", "0.9")):
        out = tmp_path / name
        assert run(["build-thinker", "--corpus", str(path), "--seed", "1",
                    "--p-user", p_user, "--out", str(out)]) == 0
        man = json.loads((tmp_path / f"{name}.manifest.json").read_text())
        hashes[name] = man["config_hash"]
    assert hashes["x.jsonl"] == hashes["y.jsonl"]
    assert hashes["x.jsonl"] != hashes["z.jsonl"]


def test_config_file_provides_defaults_and_flags_win(tmp_path, capsys):
    path = write_corpus(tmp_path, synthetic.synth_corpus(2, 6))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 11, "p_user": 1.0, "p_assistant": 0.0}))
    out1 = tmp_path / "from_config.jsonl"
    assert run(["build-thinker", "--corpus", str(path), "--config", str(cfg),
                "--out", str(out1)]) == 0
    header = json.loads(out1.read_text().splitlines()[0])
    assert header["master_seed"] == 11
    assert header["config"]["policy"]["p_user_speech"] == 1.0
    out2 = tmp_path / "flag_wins.jsonl"
    assert run(["build-thinker", "--corpus", str(path), "--config", str(cfg),
                "--p-user", "0.0", "--out", str(out2)]) == 0
    header = json.loads(out2.read_text().splitlines()[0])
    assert header["config"]["policy"]["p_user_speech"] == 0.0


def test_missing_seed_without_config_exits_2(tmp_path, capsys):
    path = write_corpus(tmp_path, synthetic.synth_corpus(1, 6))
    code = run(["build-thinker", "--corpus", str(path),
                "--out", str(tmp_path / "o.jsonl")])
    assert code == 2
    assert "--seed" in capsys.readouterr().err


def test_compile_error_exits_1(tmp_path, capsys):
    d = make_dialogue("d", with_audio=False)
    path = write_corpus(tmp_path, [d])
    out = tmp_path / "t.jsonl"
    code = run(["build-thinker", "--corpus", str(path), "--seed", "1",
                "--p-user", "1.0", "--out", str(out)])
    assert code == 1
    assert "no audio" in capsys.readouterr().err

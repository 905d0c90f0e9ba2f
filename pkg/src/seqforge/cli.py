"""forge: command-line entry point.

Exit codes: 0 success, 1 validation/compile failures, 2 usage errors.
Every mutating command writes a reproducibility manifest (embedded as a
header line in sequence outputs, plus a .manifest.json sidecar). All
randomness flows from --seed; worker count never changes output bytes.
"""
import argparse
import json
import multiprocessing
import os
import sys

import numpy as np

from seqforge import __version__, cleaning, corpus, losses, metrics, schedule
from seqforge import talker as talker_mod
from seqforge import templates as templates_mod
from seqforge import thinker as thinker_mod
from seqforge.manifest import RunManifest, file_digest


def _jobs_default() -> int:
    try:
        return max(1, int(os.environ.get("FORGE_JOBS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items, jobs: int):
    """Order-preserving map, optionally across processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with multiprocessing.Pool(processes=jobs) as pool:
        return pool.map(fn, items, chunksize=max(1, len(items) // (jobs * 4)))


class UsageError(Exception):
    pass


def _apply_config_defaults(args, required: dict[str, type],
                           optional: dict[str, tuple[type, object]] = {}) -> None:
    """Resolve flag values: explicit flag > --config JSON file > built-in default.

    Required fields without a flag or config value are a usage error.
    """
    if not getattr(args, "config", None):
        cfg = {}
    else:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    for name, cast in required.items():
        if getattr(args, name, None) is None and name in cfg:
            setattr(args, name, cast(cfg[name]))
    for name, (cast, default) in optional.items():
        if getattr(args, name, None) is None:
            setattr(args, name, cast(cfg[name]) if name in cfg else default)
    missing = [name for name in required if getattr(args, name, None) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise UsageError(f"missing {flags} (pass the flag or set it in --config)")


def _manifest_command(argv: list[str]) -> str:
    """Recorded command line with worker topology stripped.

    --jobs changes execution layout, never output bytes, so it must not make
    otherwise-identical runs produce different manifests.
    """
    kept = []
    skip = False
    for arg in argv:
        if skip:
            skip = False
            continue
        if arg == "--jobs":
            skip = True
            continue
        if arg.startswith("--jobs="):
            continue
        kept.append(arg)
    return " ".join(kept)


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------

def cmd_validate(args) -> int:
    result = corpus.parse_corpus(args.corpus)
    report = corpus.validate_corpus(result.dialogues)
    doc = {
        "dialogues": len(result.dialogues),
        "rejects": [{"line": r.line_number, "reason": r.reason} for r in result.rejects],
        "violations": [{"path": v.path, "message": v.message} for v in report.violations],
    }
    print(json.dumps(doc, ensure_ascii=False, indent=2))
    return 0 if not result.rejects and report.ok else 1


# --------------------------------------------------------------------------
# build-thinker
# --------------------------------------------------------------------------

def _compile_thinker_line(task) -> tuple[str, int, int]:
    dialogue, policy, seed, masks = task
    seq = thinker_mod.interleave_dialogue(dialogue, policy, seed, masked_spans=masks)
    n_targets = sum(1 for e in seq.elements if e.loss_target)
    return thinker_mod.serialize_sequence(seq), len(seq.elements), n_targets


def _load_masks(path) -> dict[str, list]:
    masks: dict[str, list] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if doc.get("masked_spans"):
                masks[doc["dialogue_id"]] = [(ti, tuple(rng)) for ti, rng in doc["masked_spans"]]
    return masks


def cmd_build_thinker(args) -> int:
    _apply_config_defaults(args, {"seed": int},
                           {"p_user": (float, 0.5), "p_assistant": (float, 0.5)})
    result = corpus.parse_corpus(args.corpus)
    if result.rejects:
        for r in result.rejects:
            print(f"reject line {r.line_number}: {r.reason}", file=sys.stderr)
        return 1
    policy = thinker_mod.InterleavePolicy(
        p_user_speech=args.p_user, p_assistant_segment_speech=args.p_assistant)
    masks = _load_masks(args.masks) if args.masks else {}
    tasks = [(d, policy, args.seed, masks.get(d.id)) for d in result.dialogues]
    try:
        compiled = _pmap(_compile_thinker_line, tasks, args.jobs)
    except thinker_mod.CompileError as exc:
        print(f"compile error: {exc}", file=sys.stderr)
        return 1

    lines = [line for line, _, _ in compiled]
    man = RunManifest(
        command=_manifest_command(args.argv),
        master_seed=args.seed,
        config={"policy": policy.to_json_dict(), "masks": bool(args.masks)},
        input_digests={args.corpus: file_digest(args.corpus)},
        counts={"dialogues": len(result.dialogues), "sequences": len(lines),
                "elements": sum(n for _, n, _ in compiled),
                "loss_targets": sum(n for _, _, n in compiled)},
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(man.to_json())
        fh.write("\n")
        for line in lines:
            fh.write(line)
            fh.write("\n")
    man.write_sidecar(args.out)
    print(f"wrote {len(lines)} sequences to {args.out}")
    return 0


# --------------------------------------------------------------------------
# build-talker
# --------------------------------------------------------------------------

def _compile_talker_line(task) -> tuple[str | None, str | None]:
    """Returns (line, skip_reason)."""
    dialogue, mode, ratio, seed, index = task
    assistant_turns = [t for t in dialogue.turns if t.role == "assistant"]
    if mode == "dialogue":
        speaker = assistant_turns[0].speaker_id if assistant_turns else dialogue.turns[0].speaker_id
    else:
        speaker = dialogue.turns[0].speaker_id
    try:
        ref = talker_mod.select_reference(speaker, index, dialogue.id, seed)
    except talker_mod.NoReferenceError as exc:
        return None, str(exc)
    seq = talker_mod.assemble(dialogue, mode, ratio, seed, ref)
    return talker_mod.serialize_sequence(seq), None


def cmd_build_talker(args) -> int:
    _apply_config_defaults(args, {"seed": int},
                           {"mode": (str, "dialogue"), "ratio": (str, "5:15")})
    if args.mode not in talker_mod.MODES:
        raise UsageError(f"unknown mode {args.mode!r}")
    result = corpus.parse_corpus(args.corpus)
    if result.rejects:
        for r in result.rejects:
            print(f"reject line {r.line_number}: {r.reason}", file=sys.stderr)
        return 1
    ratio = talker_mod.StreamRatio.parse(args.ratio)
    index = talker_mod.build_reference_index(result.dialogues)
    tasks = [(d, args.mode, ratio, args.seed, index) for d in result.dialogues]
    try:
        results = _pmap(_compile_talker_line, tasks, args.jobs)
    except talker_mod.AssembleError as exc:
        print(f"assemble error: {exc}", file=sys.stderr)
        return 1

    lines = [line for line, _ in results if line is not None]
    skipped = [reason for _, reason in results if reason is not None]
    for reason in skipped:
        print(f"skip: {reason}", file=sys.stderr)
    man = RunManifest(
        command=_manifest_command(args.argv),
        master_seed=args.seed,
        config={"mode": args.mode, "ratio": str(ratio)},
        input_digests={args.corpus: file_digest(args.corpus)},
        counts={"dialogues": len(result.dialogues), "sequences": len(lines),
                "skipped_no_reference": len(skipped)},
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(man.to_json())
        fh.write("\n")
        for line in lines:
            fh.write(line)
            fh.write("\n")
    man.write_sidecar(args.out)
    print(f"wrote {len(lines)} sequences to {args.out} ({len(skipped)} skipped)")
    return 0


# --------------------------------------------------------------------------
# clean
# --------------------------------------------------------------------------

def _make_clients(args):
    if args.client == "mock":
        return cleaning.MockCorrector(), cleaning.MockSynth()
    if not args.config:
        raise UsageError("--client http needs --config with endpoint URLs")
    with open(args.config, encoding="utf-8") as fh:
        cfg = json.load(fh)
    timeout = float(cfg.get("timeout_s", 10.0))
    return (cleaning.HttpCorrectorClient(cfg["corrector_url"], timeout),
            cleaning.HttpSynthClient(cfg["synth_url"], timeout))


def _clean_one(task):
    dialogue, seed, retries, client_kind = task
    corrector = cleaning.MockCorrector()
    synth = cleaning.MockSynth()
    outcome = cleaning.clean_dialogue(dialogue, corrector, synth, seed=seed, retries=retries)
    return (corpus.serialize_dialogue(outcome.dialogue),
            json.dumps(cleaning.outcome_to_dict(outcome), ensure_ascii=False,
                       separators=(",", ":")),
            outcome.status)


def cmd_clean(args) -> int:
    _apply_config_defaults(args, {}, {"client": (str, "mock"), "seed": (int, 0),
                                      "retries": (int, cleaning.DEFAULT_RETRIES)})
    result = corpus.parse_corpus(args.corpus)
    if result.rejects:
        for r in result.rejects:
            print(f"reject line {r.line_number}: {r.reason}", file=sys.stderr)
        return 1
    if args.client == "mock" and args.jobs > 1:
        rows = _pmap(_clean_one, [(d, args.seed, args.retries, "mock")
                                  for d in result.dialogues], args.jobs)
    else:
        corrector, synth = _make_clients(args)
        rows = []
        for d in result.dialogues:
            outcome = cleaning.clean_dialogue(d, corrector, synth,
                                              seed=args.seed, retries=args.retries)
            rows.append((corpus.serialize_dialogue(outcome.dialogue),
                         json.dumps(cleaning.outcome_to_dict(outcome), ensure_ascii=False,
                                    separators=(",", ":")),
                         outcome.status))

    outcomes_path = f"{args.out}.outcomes.jsonl"
    deferred_path = f"{args.out}.deferred.jsonl"
    n_deferred = 0
    with open(args.out, "w", encoding="utf-8") as corpus_fh, \
            open(outcomes_path, "w", encoding="utf-8") as outcome_fh, \
            open(deferred_path, "w", encoding="utf-8") as deferred_fh:
        for corpus_line, outcome_line, status in rows:
            corpus_fh.write(corpus_line)
            corpus_fh.write("\n")
            outcome_fh.write(outcome_line)
            outcome_fh.write("\n")
            if status == "deferred":
                deferred_fh.write(outcome_line)
                deferred_fh.write("\n")
                n_deferred += 1

    man = RunManifest(
        command=_manifest_command(args.argv),
        master_seed=args.seed,
        config={"client": args.client, "retries": args.retries},
        input_digests={args.corpus: file_digest(args.corpus)},
        counts={"dialogues": len(result.dialogues), "deferred": n_deferred},
    )
    man.write_sidecar(args.out)
    print(f"cleaned {len(result.dialogues)} dialogues -> {args.out} "
          f"({n_deferred} deferred)")
    return 0


# --------------------------------------------------------------------------
# plan
# --------------------------------------------------------------------------

def cmd_plan(args) -> int:
    plan = schedule.build_default_plan()
    if args.plan_cmd == "show":
        print(schedule.plan_to_json(plan))
        return 0
    if args.plan_cmd == "directive":
        d = schedule.directive_at(plan, args.stage, args.step, args.total)
        print(json.dumps({
            "stage": d.stage_id, "step": d.step, "phase": d.phase_index,
            "trainable": sorted(d.trainable), "lr": d.lr,
            "budget_remaining": d.budget_remaining,
        }, ensure_ascii=False, indent=2))
        return 0
    with open(args.stats, encoding="utf-8") as fh:
        stats_doc = json.load(fh)
    stats = stats_doc.get("budget_stats", stats_doc)
    rows = schedule.budget_check(plan, stats)
    print(json.dumps([row.__dict__ for row in rows], ensure_ascii=False, indent=2))
    return 0 if all(r.status in ("pass", "missing", "unit_mismatch") for r in rows) else 1


# --------------------------------------------------------------------------
# loss-check
# --------------------------------------------------------------------------

def cmd_loss_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst_ce = 0.0
    worst_kl = 0.0
    for _ in range(args.cases):
        n = int(rng.integers(2, 6))
        vocab = int(rng.integers(4, 9))
        logits = rng.normal(0.0, 0.7, size=(n, vocab))
        targets = rng.integers(0, vocab, size=n)
        mask = rng.random(n) < 0.7
        worst_ce = max(worst_ce, losses.finite_diff_check(
            lambda m: losses.masked_ce(m, targets, mask), logits, args.epsilon))
        for t in (0.5, 1.0, 2.0):
            # logit spread scales with T to keep the softened distributions
            # equally conditioned across temperatures
            teacher = rng.normal(0.0, 0.7 * t, size=(n, vocab))
            student = rng.normal(0.0, 0.7 * t, size=(n, vocab))
            worst_kl = max(worst_kl, losses.finite_diff_check(
                lambda m, tt=t: losses.kl_distill(teacher, m, tt, mask),
                student, args.epsilon))
    print(f"masked_ce  max relative gradient error: {worst_ce:.3e}")
    print(f"kl_distill max relative gradient error: {worst_kl:.3e}")
    ok = worst_ce < args.tolerance and worst_kl < args.tolerance
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


# --------------------------------------------------------------------------
# eval
# --------------------------------------------------------------------------

def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def cmd_eval(args) -> int:
    if args.eval_cmd in ("cer", "wer"):
        refs = _read_lines(args.ref)
        hyps = _read_lines(args.hyp)
        if len(refs) != len(hyps):
            print(f"ref has {len(refs)} lines but hyp has {len(hyps)}", file=sys.stderr)
            return 1
        rate = metrics.corpus_error_rate(list(zip(refs, hyps)), mode=args.eval_cmd,
                                         lang=args.lang, normalize=not args.raw)
        print(json.dumps({
            "metric": args.eval_cmd, "utterances": rate.utterances,
            "errors": rate.errors, "reference_length": rate.reference_length,
            "rate": rate.rate,
        }, indent=2))
        return 0
    responses = _read_lines(args.responses)
    acc = metrics.only_yes_accuracy(responses)
    passes = round(acc * len(responses))
    print(json.dumps({"metric": "only_yes", "total": len(responses),
                      "passes": passes, "accuracy": acc}, indent=2))
    return 0


# --------------------------------------------------------------------------
# stats
# --------------------------------------------------------------------------

def cmd_stats(args) -> int:
    result = corpus.parse_corpus(args.corpus)
    per_source_seconds: dict[str, float] = {}
    per_language: dict[str, int] = {}
    flag_histogram: dict[str, int] = {}
    total_seconds = 0.0
    for d in result.dialogues:
        per_language[d.language] = per_language.get(d.language, 0) + 1
        for f in d.quality_flags:
            flag_histogram[f.kind] = flag_histogram.get(f.kind, 0) + 1
        for t in d.turns:
            if t.audio is not None:
                per_source_seconds[d.source] = per_source_seconds.get(d.source, 0.0) \
                    + t.audio.duration_s
                total_seconds += t.audio.duration_s
    total_hours = total_seconds / 3600.0
    doc = {
        "dialogues": len(result.dialogues),
        "rejects": len(result.rejects),
        "per_source_hours": {k: v / 3600.0 for k, v in sorted(per_source_seconds.items())},
        "per_language": dict(sorted(per_language.items())),
        "flag_histogram": dict(sorted(flag_histogram.items())),
        "total_hours": total_hours,
        "total_tokens_at_12p5hz": corpus.tokens_for_hours(total_hours, 12.5),
        "budget_stats": {
            "speech": {"amount": total_hours, "unit": "hours"},
            "audio": {"amount": total_hours, "unit": "hours"},
        },
    }
    blob = json.dumps(doc, ensure_ascii=False, indent=2)
    print(blob)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(blob)
            fh.write("\n")
        man = RunManifest(command=_manifest_command(args.argv), master_seed=None, config={},
                          input_digests={args.corpus: file_digest(args.corpus)},
                          counts={"dialogues": len(result.dialogues)})
        man.write_sidecar(args.out)
    return 0


# --------------------------------------------------------------------------
# templates
# --------------------------------------------------------------------------

def cmd_templates(args) -> int:
    registry = templates_mod.load_task_registry(args.registry)
    if args.task not in registry:
        print(f"unknown task {args.task!r}; registry has {sorted(registry)}", file=sys.stderr)
        return 1
    variants = templates_mod.expand_templates(registry[args.task], limit=args.limit)
    for v in variants:
        print(json.dumps({"task_id": v.task_id, "language": v.language,
                          "variant_index": v.variant_index, "text": v.text},
                         ensure_ascii=False))
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"forge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a corpus file")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build-thinker", help="compile modality-interleaved sequences")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--p-user", type=float, dest="p_user")
    p.add_argument("--p-assistant", type=float, dest="p_assistant")
    p.add_argument("--masks", help="outcomes file from `forge clean`")
    p.add_argument("--config", help="JSON file with flag defaults (flags win)")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=_jobs_default())
    p.set_defaults(func=cmd_build_thinker)

    p = sub.add_parser("build-talker", help="assemble speech-generator sequences")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=talker_mod.MODES)
    p.add_argument("--ratio")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON file with flag defaults (flags win)")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=_jobs_default())
    p.set_defaults(func=cmd_build_talker)

    p = sub.add_parser("clean", help="run the three-branch cleaning pipeline")
    p.add_argument("--corpus", required=True)
    p.add_argument("--client", choices=("mock", "http"))
    p.add_argument("--config",
                   help="JSON config: endpoint URLs, timeout/retry values, flag defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--retries", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=_jobs_default())
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("plan", help="inspect the training schedule")
    plan_sub = p.add_subparsers(dest="plan_cmd", required=True)
    plan_sub.add_parser("show")
    d = plan_sub.add_parser("directive")
    d.add_argument("--stage", required=True)
    d.add_argument("--step", type=int, required=True)
    d.add_argument("--total", type=int, default=None)
    b = plan_sub.add_parser("budget")
    b.add_argument("--stats", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("loss-check", help="finite-difference gradient verification")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_loss_check)

    p = sub.add_parser("eval", help="evaluation metrics")
    eval_sub = p.add_subparsers(dest="eval_cmd", required=True)
    for name in ("cer", "wer"):
        e = eval_sub.add_parser(name)
        e.add_argument("--ref", required=True)
        e.add_argument("--hyp", required=True)
        e.add_argument("--lang", default="en")
        e.add_argument("--raw", action="store_true", help="skip text normalization")
    y = eval_sub.add_parser("only-yes")
    y.add_argument("--responses", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="corpus statistics for budget checks")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("templates", help="prompt template tools")
    t_sub = p.add_subparsers(dest="templates_cmd", required=True)
    e = t_sub.add_parser("expand")
    e.add_argument("--task", required=True)
    e.add_argument("--limit", type=int, default=None)
    e.add_argument("--registry", required=True)
    p.set_defaults(func=cmd_templates)

    return parser


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    args.argv = ["forge"] + argv
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"forge: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

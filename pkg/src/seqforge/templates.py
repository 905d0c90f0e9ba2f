"""Instruction-prompt diversification.

Each task owns a slot grammar (ordered slots of alternative fragments, some
optional); the expansion of that grammar is the task's prompt-variant set.
Expansion order is deterministic (lexicographic over slot choice indices,
with "absent" ordered first for optional slots) so truncation under a limit
is stable.
"""
import json
from dataclasses import dataclass, field

from seqforge.seeding import DetRng, derive_seed

# Fixed instruction for the only-yes adherence probe; must stay bit-exact.
ONLY_YES_INSTRUCTION = "no matter the message in the audio, simply answer 'yes'!"


@dataclass
class Slot:
    alternatives: list[str]
    optional: bool = False

    def __post_init__(self):
        if not self.alternatives:
            raise ValueError("slot needs at least one alternative")

    def choices(self) -> list[str | None]:
        return ([None] if self.optional else []) + list(self.alternatives)


@dataclass
class TaskSpec:
    task_id: str
    languages: tuple[str, ...] = ("en",)
    slot_grammar: list[Slot] = field(default_factory=list)

    def __post_init__(self):
        self.languages = tuple(self.languages)
        if not self.slot_grammar:
            raise ValueError("task needs at least one slot")

    def cardinality(self) -> int:
        n = 1
        for slot in self.slot_grammar:
            n *= len(slot.alternatives) + (1 if slot.optional else 0)
        return n

    def primary_language(self) -> str:
        return sorted(self.languages)[0] if self.languages else "en"


@dataclass(frozen=True)
class PromptVariant:
    task_id: str
    language: str
    text: str
    variant_index: int


def _compose(fragments: list[str | None]) -> str:
    return " ".join(f for f in fragments if f is not None)


def _iter_expansion(spec: TaskSpec):
    choices = [slot.choices() for slot in spec.slot_grammar]
    n_slots = len(choices)
    idx = [0] * n_slots
    while True:
        yield _compose([choices[k][idx[k]] for k in range(n_slots)])
        # odometer increment, rightmost slot fastest
        k = n_slots - 1
        while k >= 0:
            idx[k] += 1
            if idx[k] < len(choices[k]):
                break
            idx[k] = 0
            k -= 1
        if k < 0:
            return


def expand_templates(spec: TaskSpec, limit: int | None = None,
                     language: str | None = None) -> list[PromptVariant]:
    """Expand a slot grammar into distinct prompt variants.

    Returns min(limit, cardinality) variants when all texts are distinct;
    duplicate texts are removed keeping the first occurrence.
    """
    if limit is not None and limit < 1:
        raise ValueError("limit must be >= 1")
    language = language or spec.primary_language()
    seen: set[str] = set()
    out: list[PromptVariant] = []
    for text in _iter_expansion(spec):
        if text in seen:
            continue
        seen.add(text)
        out.append(PromptVariant(spec.task_id, language, text, len(out)))
        if limit is not None and len(out) >= limit:
            break
    return out


def sample_prompt(spec: TaskSpec, seed: int, language: str | None = None) -> PromptVariant:
    """Seeded uniform draw over the (deduplicated) expansion set."""
    variants = expand_templates(spec, language=language)
    rng = DetRng(derive_seed(seed, spec.task_id, "prompt-sample"))
    return variants[rng.below(len(variants))]


def variant_matches(spec: TaskSpec, text: str) -> bool:
    """Whether a text is derivable from the slot grammar (re-parse check)."""

    def rec(remaining: str, slot_idx: int) -> bool:
        if slot_idx == len(spec.slot_grammar):
            return remaining == ""
        slot = spec.slot_grammar[slot_idx]
        options = slot.choices()
        for opt in options:
            if opt is None:
                if rec(remaining, slot_idx + 1):
                    return True
                continue
            for cand in (opt + " ", opt):
                if remaining.startswith(cand) and rec(remaining[len(cand):], slot_idx + 1):
                    return True
        return False

    return rec(text, 0)


def build_only_yes_set(audio_ids: list[str]) -> list[tuple[str, str]]:
    """Pair every audio id with the fixed only-yes instruction, in order."""
    if not audio_ids:
        raise ValueError("audio_ids must be non-empty")
    seen: set[str] = set()
    for aid in audio_ids:
        if aid in seen:
            raise ValueError(f"duplicate audio id: {aid!r}")
        seen.add(aid)
    return [(aid, ONLY_YES_INSTRUCTION) for aid in audio_ids]


def load_task_registry(path) -> dict[str, TaskSpec]:
    """Task registry file: JSON map task_id -> {languages, slots}."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    registry: dict[str, TaskSpec] = {}
    for task_id, body in doc.items():
        slots = [Slot(alternatives=list(s["alternatives"]), optional=bool(s.get("optional", False)))
                 for s in body["slots"]]
        registry[task_id] = TaskSpec(
            task_id=task_id,
            languages=tuple(body.get("languages", ("en",))),
            slot_grammar=slots,
        )
    return registry

"""Deterministic evaluation arithmetic.

Character/word error rates under minimal edit alignment, the strict only-yes
adherence score, cosine similarity, and inference-mode gap bookkeeping.

Corpus-level error rates pool edits over pooled reference length (not the
mean of per-utterance rates). ASR text normalization (lowercase, punctuation
strip, whitespace collapse) is applied before scoring unless raw mode is
requested; the choice is part of any run's config hash.

Note on gap bookkeeping: gaps are reported as plain componentwise a2a - a2t.
The reference consistency-difference figures bundled in the acceptance
fixtures come from a different, unknown procedure and deliberately do not
match this arithmetic; this module does not try to reverse-engineer them.
"""
import math
import unicodedata
from dataclasses import dataclass
from typing import Sequence

from seqforge.kernels import edit_ops

CHAR_TOKENIZED_LANGUAGES = ("zh", "ja")


@dataclass(frozen=True)
class EditOps:
    substitutions: int
    insertions: int
    deletions: int
    reference_length: int

    @property
    def distance(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        return self.distance / max(1, self.reference_length)


def edit_distance(ref: Sequence, hyp: Sequence) -> EditOps:
    """Minimal-cost edit decomposition between two token sequences."""
    ids: dict = {}
    ref_ids = [ids.setdefault(t, len(ids)) for t in ref]
    hyp_ids = [ids.setdefault(t, len(ids)) for t in hyp]
    s, i, d = edit_ops(ref_ids, hyp_ids)
    return EditOps(substitutions=s, insertions=i, deletions=d, reference_length=len(ref))


def normalize_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    lowered = text.lower()
    stripped = "".join(
        c for c in lowered if not unicodedata.category(c).startswith("P")
    )
    return " ".join(stripped.split())


def _char_tokens(text: str, keep_spaces: bool) -> list[str]:
    if keep_spaces:
        return list(text)
    return [c for c in text if not c.isspace()]


def cer(ref: str, hyp: str, normalize: bool = True) -> EditOps:
    """Character error rate ops (Unicode scalar values after normalization)."""
    if normalize:
        ref, hyp = normalize_text(ref), normalize_text(hyp)
    return edit_distance(_char_tokens(ref, keep_spaces=True),
                         _char_tokens(hyp, keep_spaces=True))


def wer(ref: str, hyp: str, lang: str = "en", normalize: bool = True) -> EditOps:
    """Word error rate ops; zh/ja tokenize per character, others on whitespace."""
    if normalize:
        ref, hyp = normalize_text(ref), normalize_text(hyp)
    if lang in CHAR_TOKENIZED_LANGUAGES:
        return edit_distance(_char_tokens(ref, keep_spaces=False),
                             _char_tokens(hyp, keep_spaces=False))
    return edit_distance(ref.split(), hyp.split())


@dataclass(frozen=True)
class CorpusRate:
    utterances: int
    errors: int
    reference_length: int

    @property
    def rate(self) -> float:
        return self.errors / max(1, self.reference_length)


def corpus_error_rate(pairs: Sequence[tuple[str, str]], mode: str = "cer",
                      lang: str = "en", normalize: bool = True) -> CorpusRate:
    """Pooled error rate: sum of edits over sum of reference lengths."""
    if mode not in ("cer", "wer"):
        raise ValueError(f"mode must be 'cer' or 'wer', got {mode!r}")
    errors = 0
    ref_len = 0
    for ref, hyp in pairs:
        ops = cer(ref, hyp, normalize) if mode == "cer" else wer(ref, hyp, lang, normalize)
        errors += ops.distance
        ref_len += ops.reference_length
    return CorpusRate(utterances=len(pairs), errors=errors, reference_length=ref_len)


def _is_yes(response: str) -> bool:
    s = response.strip()
    while s and unicodedata.category(s[-1]).startswith("P"):
        s = s[:-1]
    return s.casefold() == "yes"


def only_yes_accuracy(responses: Sequence[str]) -> float:
    """Strict adherence: content must be exactly "yes" after trimming
    whitespace and terminal punctuation and case-folding."""
    if not responses:
        raise ValueError("responses must be non-empty")
    return sum(1 for r in responses if _is_yes(r)) / len(responses)


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("vectors must be non-empty")
    dot = math.fsum(x * y for x, y in zip(a, b))
    na = math.sqrt(math.fsum(x * x for x in a))
    nb = math.sqrt(math.fsum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero vectors")
    return dot / (na * nb)


@dataclass(frozen=True)
class AblationCell:
    similarity: float
    consistency: float

    def __post_init__(self):
        if not -1.0 <= self.similarity <= 1.0:
            raise ValueError(f"similarity must be in [-1, 1], got {self.similarity}")
        if not 0.0 <= self.consistency <= 1.0:
            raise ValueError(f"consistency must be in [0, 1], got {self.consistency}")


def ablation_gap(a2t: AblationCell, a2a: AblationCell) -> tuple[float, float]:
    """Componentwise a2a - a2t (negative = degradation when speaking)."""
    return (a2a.similarity - a2t.similarity, a2a.consistency - a2t.consistency)

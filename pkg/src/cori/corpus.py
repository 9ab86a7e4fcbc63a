"""Core data types: utterances, labeled samples, datasets, and their JSONL serialization."""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union


class LanguageId(Enum):
    ZH = "zh"
    JA = "ja"
    KO = "ko"
    VI = "vi"
    EN = "en"

    @classmethod
    def parse(cls, code: str) -> "LanguageId":
        try:
            return cls(code.lower())
        except ValueError:
            raise ValueError(f"unknown language code {code!r}; expected one of "
                             + ", ".join(m.value for m in cls)) from None


class Task(Enum):
    PAWSX = "pawsx"
    XNLI = "xnli"
    UDPOS = "udpos"
    PANX = "panx"
    XQUAD = "xquad"
    MLQA = "mlqa"

    @classmethod
    def parse(cls, tag: str) -> "Task":
        try:
            return cls(tag.lower())
        except ValueError:
            raise ValueError(f"unknown task tag {tag!r}") from None

    @property
    def kind(self) -> str:
        if self in (Task.PAWSX, Task.XNLI):
            return "sentence"
        if self in (Task.UDPOS, Task.PANX):
            return "token"
        return "qa"


# Latin-script languages join word tokens with single spaces; CJK concatenates.
SPACE_JOINED = frozenset({LanguageId.VI, LanguageId.EN})


def join_tokens(tokens: Sequence[str], lang: LanguageId) -> str:
    sep = " " if lang in SPACE_JOINED else ""
    return sep.join(tokens)


@dataclass(frozen=True)
class Word:
    """One segmented word: orthographic surface, its tokens, romanized form, char span.

    Spans index Unicode scalar values of the source sentence, end-exclusive.
    ``oov`` marks words whose romanization fell back to surface passthrough.
    """
    surface: str
    tokens: tuple[str, ...]
    roman: str
    span: tuple[int, int]
    oov: bool = False

    def with_roman(self, roman: str, oov: bool = False) -> "Word":
        return replace(self, roman=roman, oov=oov)


@dataclass(frozen=True)
class Utterance:
    """Word-aligned orthographic and romanized streams for one sentence."""
    lang: LanguageId
    text: str
    words: tuple[Word, ...]

    def __len__(self) -> int:
        return len(self.words)

    def surfaces(self) -> list[str]:
        return [w.surface for w in self.words]

    def romans(self) -> list[str]:
        return [w.roman for w in self.words]


@dataclass(frozen=True)
class LabeledSample:
    """Task-tagged record.

    Payload depends on the task kind:
      sentence  utterance (+ optional utterance2 for the pair), label = class index
      token     utterance, label = per-word tag tuple (length == word count)
      qa        context + question utterances, label = inclusive (start_word, end_word)
    """
    id: str
    task: Task
    utterance: Optional[Utterance] = None
    utterance2: Optional[Utterance] = None
    context: Optional[Utterance] = None
    question: Optional[Utterance] = None
    label: Union[int, tuple, None] = None

    def input_utterances(self) -> list[Utterance]:
        if self.task.kind == "qa":
            return [u for u in (self.context, self.question) if u is not None]
        return [u for u in (self.utterance, self.utterance2) if u is not None]


@dataclass(frozen=True)
class Dataset:
    samples: tuple[LabeledSample, ...]
    split: str
    source_lang: LanguageId

    def __len__(self) -> int:
        return len(self.samples)


class DatasetFormatError(ValueError):
    """Raised on malformed dataset files; message carries the offending line number."""


def _has_letter(s: str) -> bool:
    return any(unicodedata.category(c).startswith("L") for c in s)


def _is_space(c: str) -> bool:
    return c.isspace()


def validate_utterance(u: Utterance) -> list[str]:
    """Check utterance invariants; returns violation descriptions (empty = valid).

    Never mutates the input; violations are data, not failures.
    """
    violations: list[str] = []
    sep = " " if u.lang in SPACE_JOINED else ""

    for i, w in enumerate(u.words):
        if not w.tokens or any(t == "" for t in w.tokens):
            violations.append(f"word {i}: empty token list or empty token")
            continue
        if sep.join(w.tokens) != w.surface:
            violations.append(
                f"word {i}: tokens {list(w.tokens)} do not concatenate to surface {w.surface!r}")
        if w.span[1] <= w.span[0]:
            violations.append(f"word {i}: span {w.span} has end <= start")
        if _has_letter(w.surface) and not w.roman:
            violations.append(f"word {i}: empty roman for letter-bearing surface {w.surface!r}")

    # Tiling: words cover text left to right; gaps may contain only whitespace.
    pos = 0
    n = len(u.text)
    for i, w in enumerate(u.words):
        start, end = w.span
        if start < pos:
            violations.append(f"word {i}: span {w.span} overlaps previous word")
            pos = max(pos, end)
            continue
        if end > n:
            violations.append(f"word {i}: span {w.span} exceeds text length {n}")
            continue
        gap = u.text[pos:start]
        if gap and not all(_is_space(c) for c in gap):
            violations.append(f"word {i}: non-whitespace gap {gap!r} before span")
        # The span slice must consist of the word's tokens separated only by whitespace.
        p = start
        for j, tok in enumerate(w.tokens):
            if j > 0:
                while p < end and _is_space(u.text[p]):
                    p += 1
            if u.text[p:p + len(tok)] != tok:
                violations.append(
                    f"word {i}: text at span does not match token {tok!r}")
                p = end
                break
            p += len(tok)
        else:
            if p != end:
                violations.append(
                    f"word {i}: span {w.span} covers trailing text beyond tokens")
        pos = end
    tail = u.text[pos:]
    if tail and not all(_is_space(c) for c in tail):
        violations.append(f"trailing non-whitespace text {tail!r} not covered by words")

    return violations


def _check_bio(tags: Sequence[str]) -> Optional[str]:
    """Returns a description of the first BIO violation, or None if valid."""
    prev = "O"
    for i, tag in enumerate(tags):
        if tag == "O":
            prev = tag
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            return f"tag {i} ({tag!r}) is not O, B-X, or I-X"
        if tag[0] == "I":
            if prev == "O" or prev[2:] != tag[2:]:
                return f"tag {i} ({tag!r}) continues no matching entity (previous {prev!r})"
        prev = tag
    return None


def validate_sample(s: LabeledSample) -> list[str]:
    """Check task-payload invariants of one sample (tag lengths, span bounds, BIO)."""
    violations: list[str] = []
    kind = s.task.kind
    if kind == "sentence":
        if s.utterance is None or not isinstance(s.label, int):
            violations.append("sentence sample needs an utterance and an int label")
    elif kind == "token":
        if s.utterance is None or not isinstance(s.label, tuple):
            violations.append("token sample needs an utterance and a tag tuple")
        else:
            if len(s.label) != len(s.utterance.words):
                violations.append(
                    f"tag list length {len(s.label)} != word count {len(s.utterance.words)}")
            if s.task is Task.PANX:
                err = _check_bio(s.label)
                if err:
                    violations.append(f"BIO violation: {err}")
    else:
        if s.context is None or s.question is None:
            violations.append("qa sample needs context and question utterances")
        elif not (isinstance(s.label, tuple) and len(s.label) == 2):
            violations.append("qa sample needs an (start_word, end_word) answer span")
        else:
            start, end = s.label
            m = len(s.context.words)
            if not (0 <= start <= end < m):
                violations.append(f"answer span {s.label} out of range for {m} context words")
    return violations


# ---------------------------------------------------------------------------
# JSONL serialization
# ---------------------------------------------------------------------------

def word_to_obj(w: Word) -> dict:
    obj = {"surface": w.surface, "tokens": list(w.tokens), "roman": w.roman,
           "span": [w.span[0], w.span[1]]}
    if w.oov:
        obj["oov"] = True
    return obj


def word_from_obj(obj: dict) -> Word:
    return Word(surface=obj["surface"], tokens=tuple(obj["tokens"]), roman=obj["roman"],
                span=(obj["span"][0], obj["span"][1]), oov=bool(obj.get("oov", False)))


def utterance_to_obj(u: Utterance) -> dict:
    return {"text": u.text, "words": [word_to_obj(w) for w in u.words]}


def utterance_from_obj(obj: dict, lang: LanguageId) -> Utterance:
    return Utterance(lang=lang, text=obj["text"],
                     words=tuple(word_from_obj(w) for w in obj["words"]))


def sample_to_obj(s: LabeledSample) -> dict:
    kind = s.task.kind
    if kind == "qa":
        lang = s.context.lang
        obj = {"id": s.id, "task": s.task.value, "lang": lang.value,
               "context": utterance_to_obj(s.context),
               "question": utterance_to_obj(s.question),
               "answer_span": [s.label[0], s.label[1]]}
        return obj
    lang = s.utterance.lang
    obj = {"id": s.id, "task": s.task.value, "lang": lang.value,
           "text": s.utterance.text,
           "words": [word_to_obj(w) for w in s.utterance.words]}
    if s.utterance2 is not None:
        obj["text2"] = s.utterance2.text
        obj["words2"] = [word_to_obj(w) for w in s.utterance2.words]
    obj["label"] = list(s.label) if isinstance(s.label, tuple) else s.label
    return obj


def sample_from_obj(obj: dict) -> LabeledSample:
    task = Task.parse(obj["task"])
    lang = LanguageId.parse(obj["lang"])
    if task.kind == "qa":
        span = obj["answer_span"]
        return LabeledSample(
            id=obj["id"], task=task,
            context=utterance_from_obj(obj["context"], lang),
            question=utterance_from_obj(obj["question"], lang),
            label=(span[0], span[1]))
    utt = Utterance(lang=lang, text=obj["text"],
                    words=tuple(word_from_obj(w) for w in obj["words"]))
    utt2 = None
    if "text2" in obj:
        utt2 = Utterance(lang=lang, text=obj["text2"],
                         words=tuple(word_from_obj(w) for w in obj["words2"]))
    label = obj["label"]
    if isinstance(label, list):
        label = tuple(label)
    return LabeledSample(id=obj["id"], task=task, utterance=utt, utterance2=utt2, label=label)


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def read_dataset(path: Union[str, Path], task: Optional[Task] = None,
                 split: str = "test",
                 source_lang: Optional[LanguageId] = None) -> Dataset:
    """Read a JSONL dataset file; raises DatasetFormatError naming the offending line."""
    path = Path(path)
    samples: list[LabeledSample] = []
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"{path}:{lineno}: malformed JSON: {e}") from None
            try:
                sample = sample_from_obj(obj)
            except (KeyError, ValueError, TypeError) as e:
                raise DatasetFormatError(f"{path}:{lineno}: {e}") from None
            if task is not None and sample.task is not task:
                raise DatasetFormatError(
                    f"{path}:{lineno}: task {sample.task.value} does not match expected {task.value}")
            bad = validate_sample(sample)
            if bad:
                raise DatasetFormatError(f"{path}:{lineno}: {'; '.join(bad)}")
            if sample.id in seen_ids:
                raise DatasetFormatError(f"{path}:{lineno}: duplicate sample id {sample.id!r}")
            seen_ids.add(sample.id)
            samples.append(sample)
    if samples and task is None:
        first = samples[0].task
        for i, s in enumerate(samples):
            if s.task is not first:
                raise DatasetFormatError(
                    f"{path}: sample {i} task {s.task.value} differs from {first.value}")
    if source_lang is None:
        langs = samples[0].input_utterances() if samples else []
        source_lang = langs[0].lang if langs else LanguageId.EN
    return Dataset(samples=tuple(samples), split=split, source_lang=source_lang)


def write_dataset(d: Dataset, path: Union[str, Path]) -> None:
    """Write one JSON object per line, UTF-8. write∘read is the identity."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for s in d.samples:
            f.write(_dumps(sample_to_obj(s)))
            f.write("\n")


def read_utterances(path: Union[str, Path]) -> list[Utterance]:
    """Read bare utterance records {lang, text, words} (pipeline intermediates)."""
    out: list[Utterance] = []
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(utterance_from_obj(obj, LanguageId.parse(obj["lang"])))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise DatasetFormatError(f"{path}:{lineno}: {e}") from None
    return out


def write_utterances(utts: Iterable[Utterance], path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for u in utts:
            obj = {"lang": u.lang.value, **utterance_to_obj(u)}
            f.write(_dumps(obj))
            f.write("\n")

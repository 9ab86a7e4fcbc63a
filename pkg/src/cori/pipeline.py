"""Dataset construction: translation (sentence-level and masked-template QA),
segmentation, label projection, and romanization, emitting schema-valid files.

Per-task processing (MT / SEG / ROM):
  pawsx, xnli   yes / yes / yes   each pair member translated separately,
                                  labels preserved across languages
  udpos         no  / no  / yes   inputs arrive pre-segmented
  panx          no  / yes / yes   token tags projected to word tags
  xquad, mlqa   yes / yes / yes   masked answer template translation
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from .corpus import (Dataset, DatasetFormatError, LabeledSample, LanguageId,
                     SPACE_JOINED, Task, Utterance, Word, write_dataset)
from .mt import MTClient
from .romanize import RomanizationTables, romanize_utterance
from .segment import LabelConsistencyError, Lexicon, empty_lexicon, segment, \
    project_token_labels_to_words

log = logging.getLogger(__name__)

DEFAULT_MASK = "[MASK_ANS]"


class TemplateIntegrityError(ValueError):
    """The mask token did not survive translation exactly once."""


@dataclass(frozen=True)
class QATemplate:
    """A QA triple with the answer masked out of the context, ready to translate."""
    context: str  # masked: the mask token occurs exactly once
    question: str
    answer: str
    mask_token: str = DEFAULT_MASK

    def __post_init__(self):
        if self.context.count(self.mask_token) != 1:
            raise ValueError("mask token must occur exactly once in the masked context")

    @classmethod
    def build(cls, context: str, question: str, answer_span: tuple[int, int],
              mask: str = DEFAULT_MASK) -> "QATemplate":
        masked, answer = mask_answer(context, answer_span, mask)
        return cls(context=masked, question=question, answer=answer, mask_token=mask)


@dataclass(frozen=True)
class TranslatedQA:
    context: str
    question: str
    answer: str
    answer_char_span: tuple[int, int]
    words: tuple[Word, ...]
    answer_word_span: tuple[int, int]


def mask_answer(context: str, answer_span: tuple[int, int],
                mask: str = DEFAULT_MASK) -> tuple[str, str]:
    """Replace the answer span with the mask token; returns (masked, answer)."""
    start, end = answer_span
    if not 0 <= start < end <= len(context):
        raise ValueError(f"answer span {answer_span} out of context bounds")
    if mask in context:
        raise ValueError(f"mask token {mask!r} already occurs in the raw context")
    answer = context[start:end]
    return context[:start] + mask + context[end:], answer


def _word_span_for_chars(words: Sequence[Word], char_span: tuple[int, int]
                         ) -> tuple[int, int]:
    cs, ce = char_span
    start = end = None
    for i, w in enumerate(words):
        if w.span[1] > cs and w.span[0] < ce:
            if start is None:
                start = i
            end = i
    if start is None:
        raise TemplateIntegrityError(
            f"no words overlap answer chars [{cs}, {ce})")
    return start, end


def translate_qa_template(client: MTClient, context: str, question: str,
                          answer_span: tuple[int, int],
                          src: Union[LanguageId, str], tgt: Union[LanguageId, str],
                          mask: str = DEFAULT_MASK,
                          lex: Optional[Lexicon] = None) -> TranslatedQA:
    """Masked-template QA translation.

    The answer is masked out of the context; masked context, question, and
    answer are translated independently; the mask must survive translation
    exactly once, after which the translated answer is substituted back and
    located. The returned word span covers the answer's characters in the
    segmented target context (lexicon merges may widen it at the edges).

    Raises TemplateIntegrityError when the mask is lost or duplicated; callers
    drop such samples with a logged reason.
    """
    template = QATemplate.build(context, question, answer_span, mask)
    t_masked = client.translate(template.context, src, tgt).text
    t_question = client.translate(template.question, src, tgt).text
    t_answer = client.translate(template.answer, src, tgt).text

    occurrences = t_masked.count(mask)
    if occurrences != 1:
        raise TemplateIntegrityError(
            f"mask token occurs {occurrences} times after translation (expected 1)")
    char_start = t_masked.index(mask)
    t_context = t_masked.replace(mask, t_answer)
    char_end = char_start + len(t_answer)
    if t_context[char_start:char_end] != t_answer:
        raise TemplateIntegrityError("answer reinsertion mismatch")

    tgt_lang = tgt if isinstance(tgt, LanguageId) else LanguageId.parse(tgt)
    lexicon = lex if lex is not None else empty_lexicon(tgt_lang)
    words = tuple(segment(t_context, lexicon))
    word_span = _word_span_for_chars(words, (char_start, char_end))
    return TranslatedQA(context=t_context, question=t_question, answer=t_answer,
                        answer_char_span=(char_start, char_end), words=words,
                        answer_word_span=word_span)


# ---------------------------------------------------------------------------
# Raw input readers (one JSON object per line)
# ---------------------------------------------------------------------------
#
#   sentence tasks  {"id", "label", "text1"[, "text2"]}
#   udpos           {"id", "words": [...], "tags": [...]}
#   panx            {"id", "text", "token_tags": [...]}
#   qa tasks        {"id", "context", "question", "answer", "answer_start"}

def _read_raw(path: Union[str, Path], required: tuple[str, ...]) -> list[dict]:
    rows = []
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"{path}:{lineno}: malformed JSON: {e}") from None
            missing = [k for k in required if k not in obj]
            if missing:
                raise DatasetFormatError(f"{path}:{lineno}: missing fields {missing}")
            rows.append(obj)
    return rows


def _segment_and_romanize(text: str, lang: LanguageId, lex: Lexicon,
                          tables: RomanizationTables, strip_tones: bool) -> Utterance:
    words = segment(text, lex)
    u = Utterance(lang=lang, text=text, words=tuple(words))
    return romanize_utterance(u, lex, tables, strip_tones)


def _presegmented_utterance(word_strings: Sequence[str], lang: LanguageId) -> Utterance:
    sep = " " if lang in SPACE_JOINED else ""
    words = []
    pos = 0
    parts = []
    for s in word_strings:
        tokens = tuple(s.split(" ")) if lang in SPACE_JOINED else tuple(s)
        words.append(Word(surface=s, tokens=tokens, roman="", span=(pos, pos + len(s))))
        parts.append(s)
        pos += len(s) + len(sep)
    return Utterance(lang=lang, text=sep.join(parts), words=tuple(words))


def build_dataset(input_path: Union[str, Path], task: Task,
                  src_lang: LanguageId, target_langs: Sequence[LanguageId],
                  lexicons: dict[LanguageId, Lexicon], tables: RomanizationTables,
                  client: Optional[MTClient], out_dir: Union[str, Path],
                  mask: str = DEFAULT_MASK, strip_tones: bool = False,
                  split: str = "test") -> dict:
    """Run the per-task pipeline and emit one dataset file per target language.

    Files are written to a temp path and promoted atomically on success.
    Returns a report with per-language output paths and sample counts.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = task.kind
    report: dict = {"task": task.value, "outputs": {}, "counts": {}, "dropped": {}}

    if kind == "token":
        langs = [src_lang]  # token-level tasks are not machine-translated
    else:
        if client is None:
            raise ValueError(f"task {task.value} needs a translation client")
        if not target_langs:
            raise ValueError(f"task {task.value} needs at least one target language")
        langs = list(target_langs)

    if kind == "sentence":
        rows = _read_raw(input_path, ("id", "label", "text1"))
    elif task is Task.UDPOS:
        rows = _read_raw(input_path, ("id", "words", "tags"))
    elif task is Task.PANX:
        rows = _read_raw(input_path, ("id", "text", "token_tags"))
    else:
        rows = _read_raw(input_path, ("id", "context", "question", "answer",
                                      "answer_start"))

    for lang in langs:
        lex = lexicons.get(lang, empty_lexicon(lang))
        samples: list[LabeledSample] = []
        dropped = 0
        for row in rows:
            if kind == "sentence":
                texts = [row["text1"]] + ([row["text2"]] if "text2" in row else [])
                if lang is not src_lang:
                    texts = [client.translate(t, src_lang, lang).text for t in texts]
                utts = [_segment_and_romanize(t, lang, lex, tables, strip_tones)
                        for t in texts]
                samples.append(LabeledSample(
                    id=row["id"], task=task, utterance=utts[0],
                    utterance2=utts[1] if len(utts) > 1 else None,
                    label=int(row["label"])))
            elif task is Task.UDPOS:
                u = _presegmented_utterance(row["words"], lang)
                u = romanize_utterance(u, lex, tables, strip_tones)
                if len(row["tags"]) != len(u.words):
                    raise DatasetFormatError(
                        f"sample {row['id']}: {len(row['tags'])} tags for "
                        f"{len(u.words)} words")
                samples.append(LabeledSample(id=row["id"], task=task, utterance=u,
                                             label=tuple(row["tags"])))
            elif task is Task.PANX:
                words = segment(row["text"], lex)
                try:
                    tags = project_token_labels_to_words(row["token_tags"], words)
                except (LabelConsistencyError, ValueError) as e:
                    log.warning("dropping sample %s: %s", row["id"], e)
                    dropped += 1
                    continue
                u = Utterance(lang=lang, text=row["text"], words=tuple(words))
                u = romanize_utterance(u, lex, tables, strip_tones)
                samples.append(LabeledSample(id=row["id"], task=task, utterance=u,
                                             label=tuple(tags)))
            else:
                answer_start = int(row["answer_start"])
                span = (answer_start, answer_start + len(row["answer"]))
                if row["context"][span[0]:span[1]] != row["answer"]:
                    raise DatasetFormatError(
                        f"sample {row['id']}: answer not at recorded offset")
                if lang is src_lang:
                    ctx_words = tuple(segment(row["context"], lex))
                    t = TranslatedQA(context=row["context"], question=row["question"],
                                     answer=row["answer"], answer_char_span=span,
                                     words=ctx_words,
                                     answer_word_span=_word_span_for_chars(ctx_words, span))
                else:
                    try:
                        t = translate_qa_template(client, row["context"], row["question"],
                                                  span, src_lang, lang, mask, lex)
                    except TemplateIntegrityError as e:
                        log.warning("dropping sample %s (%s -> %s): %s",
                                    row["id"], src_lang.value, lang.value, e)
                        dropped += 1
                        continue
                context_u = romanize_utterance(
                    Utterance(lang=lang, text=t.context, words=t.words),
                    lex, tables, strip_tones)
                question_u = _segment_and_romanize(t.question, lang, lex, tables,
                                                   strip_tones)
                samples.append(LabeledSample(id=row["id"], task=task,
                                             context=context_u, question=question_u,
                                             label=t.answer_word_span))

        dataset = Dataset(samples=tuple(samples), split=split, source_lang=src_lang)
        final = out_dir / f"{task.value}.{lang.value}.jsonl"
        tmp = out_dir / f".{task.value}.{lang.value}.jsonl.tmp"
        write_dataset(dataset, tmp)
        os.replace(tmp, final)
        report["outputs"][lang.value] = str(final)
        report["counts"][lang.value] = len(samples)
        report["dropped"][lang.value] = dropped
        log.info("%s %s: %d samples (%d dropped) -> %s",
                 task.value, lang.value, len(samples), dropped, final)
    return report

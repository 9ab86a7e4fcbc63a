"""Dictionary-driven word segmentation and token-to-word label projection.

Segmentation is greedy forward maximum matching over tokens: for CJK one
Unicode character is a token, for VI (and EN) whitespace-separated terms are
tokens. At each position the longest lexicon match wins; tokens not covered by
the lexicon become singleton words. Punctuation tokens always form singleton
words.
"""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .corpus import LanguageId, SPACE_JOINED, Word, join_tokens

log = logging.getLogger(__name__)


class LexiconFormatError(ValueError):
    pass


class LabelConsistencyError(ValueError):
    """Token tags within one word disagree (the word/label mismatch the projector detects)."""

    def __init__(self, word_index: int, message: str):
        super().__init__(f"word {word_index}: {message}")
        self.word_index = word_index


@dataclass(frozen=True)
class LexEntry:
    reading: str = ""   # kana reading, JA entries only
    pinyin: str = ""    # tone-marked pinyin, ZH entries only


@dataclass(frozen=True)
class Lexicon:
    lang: LanguageId
    entries: dict[str, LexEntry] = field(default_factory=dict)
    max_entry_len: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, surface: str) -> Optional[LexEntry]:
        return self.entries.get(surface)


def empty_lexicon(lang: LanguageId) -> Lexicon:
    return Lexicon(lang=lang, entries={}, max_entry_len=0)


def _entry_tokens(surface: str, lang: LanguageId) -> list[str]:
    if lang in SPACE_JOINED:
        return surface.split(" ")
    return list(surface)


def load_lexicon(path: Union[str, Path], lang: LanguageId) -> Lexicon:
    """Load a lexicon TSV: ``surface <TAB> reading_or_empty <TAB> pinyin_or_empty``.

    '#'-prefixed lines are comments. Duplicate surfaces: last row wins, with a
    logged warning. Malformed rows raise LexiconFormatError with the line number.
    """
    path = Path(path)
    entries: dict[str, LexEntry] = {}
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise LexiconFormatError(
                    f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}")
            surface, reading, pinyin = cols
            if not surface:
                raise LexiconFormatError(f"{path}:{lineno}: empty surface")
            if lang not in SPACE_JOINED:
                if any(c.isspace() for c in surface):
                    raise LexiconFormatError(
                        f"{path}:{lineno}: CJK entry surface {surface!r} contains whitespace")
            elif "  " in surface or surface != surface.strip():
                raise LexiconFormatError(
                    f"{path}:{lineno}: entry surface {surface!r} must use single "
                    f"internal spaces only")
            if surface in entries:
                log.warning("%s:%d: duplicate lexicon surface %r, last row wins",
                            path, lineno, surface)
            entries[surface] = LexEntry(reading=reading, pinyin=pinyin)
    max_len = max((len(_entry_tokens(s, lang)) for s in entries), default=0)
    return Lexicon(lang=lang, entries=entries, max_entry_len=max_len)


def _is_punct(tok: str) -> bool:
    return all(unicodedata.category(c).startswith("P") for c in tok)


def _tokenize(text: str, lang: LanguageId) -> list[tuple[str, int, int]]:
    """Split text into (token, start, end) triples; whitespace is dropped.

    CJK: one character per token. VI/EN: whitespace terms, with leading and
    trailing punctuation characters split off as their own tokens so that
    punctuation can form singleton words.
    """
    toks: list[tuple[str, int, int]] = []
    if lang in SPACE_JOINED:
        i = 0
        n = len(text)
        while i < n:
            if text[i].isspace():
                i += 1
                continue
            j = i
            while j < n and not text[j].isspace():
                j += 1
            term, s, e = text[i:j], i, j
            # split off edge punctuation characters
            lead = 0
            while lead < len(term) and unicodedata.category(term[lead]).startswith("P"):
                lead += 1
            trail = len(term)
            while trail > lead and unicodedata.category(term[trail - 1]).startswith("P"):
                trail -= 1
            for k in range(lead):
                toks.append((term[k], s + k, s + k + 1))
            if lead < trail:
                toks.append((term[lead:trail], s + lead, s + trail))
            for k in range(trail, len(term)):
                toks.append((term[k], s + k, s + k + 1))
            i = j
    else:
        for i, c in enumerate(text):
            if c.isspace():
                continue
            toks.append((c, i, i + 1))
    return toks


def segment(text: str, lex: Lexicon) -> list[Word]:
    """Greedy forward maximum matching; roman fields are left empty for the romanizer."""
    lang = lex.lang
    toks = _tokenize(text, lang)
    words: list[Word] = []
    i = 0
    n = len(toks)
    while i < n:
        tok, s, e = toks[i]
        if _is_punct(tok):
            words.append(Word(surface=tok, tokens=(tok,), roman="", span=(s, e)))
            i += 1
            continue
        best = 0
        limit = min(lex.max_entry_len, n - i)
        for length in range(limit, 1, -1):
            window = toks[i:i + length]
            if any(_is_punct(t) for t, _, _ in window):
                continue
            candidate = join_tokens([t for t, _, _ in window], lang)
            if candidate in lex.entries:
                best = length
                break
        if best == 0:
            best = 1
        window = toks[i:i + best]
        surface = join_tokens([t for t, _, _ in window], lang)
        span = (window[0][1], window[-1][2])
        words.append(Word(surface=surface, tokens=tuple(t for t, _, _ in window),
                          roman="", span=span))
        i += best
    return words


def project_token_labels_to_words(token_tags: Sequence[str],
                                  words: Sequence[Word]) -> list[str]:
    """Collapse token-level BIO tags to one tag per word.

    Each word takes its first token's tag (B-X/I-X) or O when all its tokens
    are O. Words whose tokens mix entity types, mix O with non-O, or restart
    an entity mid-word signal a segmentation/annotation mismatch and raise
    LabelConsistencyError naming the word.
    """
    total = sum(len(w.tokens) for w in words)
    if len(token_tags) != total:
        raise ValueError(f"{len(token_tags)} token tags for {total} tokens")
    bad = _input_bio_error(token_tags)
    if bad:
        raise ValueError(f"input tags are not valid BIO: {bad}")

    out: list[str] = []
    pos = 0
    for wi, w in enumerate(words):
        tags = list(token_tags[pos:pos + len(w.tokens)])
        pos += len(w.tokens)
        if all(t == "O" for t in tags):
            out.append("O")
            continue
        if any(t == "O" for t in tags):
            raise LabelConsistencyError(wi, f"mix of O and entity tags {tags}")
        types = {t[2:] for t in tags}
        if len(types) > 1:
            raise LabelConsistencyError(wi, f"conflicting entity types {sorted(types)}")
        if any(t.startswith("B-") for t in tags[1:]):
            raise LabelConsistencyError(wi, f"entity restarts mid-word {tags}")
        out.append(tags[0])
    return out


def _input_bio_error(tags: Sequence[str]) -> Optional[str]:
    prev = "O"
    for i, tag in enumerate(tags):
        if tag == "O":
            prev = tag
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            return f"tag {i} is {tag!r}"
        if tag[0] == "I" and (prev == "O" or prev[2:] != tag[2:]):
            return f"tag {i} ({tag!r}) follows {prev!r}"
        prev = tag
    return None

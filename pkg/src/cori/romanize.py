"""Romanization of word-aligned CJKV text.

KO is romanized algorithmically (Hangul syllable decomposition + Revised
Romanization jamo tables, per syllable, no cross-syllable assimilation).
JA maps kana through a Hepburn table; kanji-bearing words go through the
lexicon's kana reading first. ZH uses lexicon pinyin (word-level lookup,
per-character fallback). VI text is its own romanization. Out-of-lexicon
words pass through with an OOV flag so corpora stay alignable.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .corpus import LanguageId, Utterance
from .segment import Lexicon

HANGUL_BASE = 0xAC00
HANGUL_LAST = 0xD7A3
N_INITIAL, N_MEDIAL, N_FINAL = 19, 21, 28

_SOKUON = "っッ"
_CHOON = "ーｰ"
_SMALL_Y = "ゃゅょャュョ"
_VOWELS = "aeiou"


class NotHangulError(ValueError):
    pass


class TableFormatError(ValueError):
    pass


@dataclass(frozen=True)
class JamoTriple:
    """Jamo indices of one precomposed Hangul syllable (final 0 = none)."""
    initial: int
    medial: int
    final: int

    def __post_init__(self):
        if not (0 <= self.initial < N_INITIAL and 0 <= self.medial < N_MEDIAL
                and 0 <= self.final < N_FINAL):
            raise ValueError(f"jamo indices out of range: {self}")


def decompose_hangul(syllable: str) -> JamoTriple:
    """Decompose one precomposed Hangul syllable into jamo indices."""
    if len(syllable) != 1:
        raise NotHangulError(f"expected a single character, got {syllable!r}")
    idx = ord(syllable) - HANGUL_BASE
    if not (0 <= ord(syllable) <= HANGUL_LAST and idx >= 0):
        raise NotHangulError(f"{syllable!r} (U+{ord(syllable):04X}) is not a Hangul syllable")
    return JamoTriple(initial=idx // 588, medial=(idx % 588) // 28, final=idx % 28)


def compose_hangul(j: JamoTriple) -> str:
    """Inverse of decompose_hangul."""
    return chr(HANGUL_BASE + j.initial * 588 + j.medial * 28 + j.final)


@dataclass(frozen=True)
class RomanizationTables:
    ko_initial: tuple[str, ...]
    ko_medial: tuple[str, ...]
    ko_final: tuple[str, ...]
    kana_map: dict[str, str]


def load_tables(path: Optional[Union[str, Path]] = None) -> RomanizationTables:
    """Load romanization tables from TSV (``kind <TAB> index_or_kana <TAB> roman``).

    Defaults to the checked-in package resource. Validates completeness of the
    jamo tables and base kana coverage of both syllabaries.
    """
    if path is None:
        text = resources.files("cori").joinpath("data/romanization.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    ko_initial: dict[int, str] = {}
    ko_medial: dict[int, str] = {}
    ko_final: dict[int, str] = {}
    kana: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise TableFormatError(f"line {lineno}: expected 3 columns, got {len(cols)}")
        kind, key, roman = cols
        if kind == "kana":
            kana[key] = roman
        elif kind in ("ko_initial", "ko_medial", "ko_final"):
            {"ko_initial": ko_initial, "ko_medial": ko_medial, "ko_final": ko_final}[kind][int(key)] = roman
        else:
            raise TableFormatError(f"line {lineno}: unknown kind {kind!r}")

    def as_tuple(d: dict[int, str], n: int, name: str) -> tuple[str, ...]:
        if sorted(d) != list(range(n)):
            raise TableFormatError(f"{name} table must cover indices 0..{n - 1}")
        return tuple(d[i] for i in range(n))

    tables = RomanizationTables(
        ko_initial=as_tuple(ko_initial, N_INITIAL, "ko_initial"),
        ko_medial=as_tuple(ko_medial, N_MEDIAL, "ko_medial"),
        ko_final=as_tuple(ko_final, N_FINAL, "ko_final"),
        kana_map=kana)
    if tables.ko_initial[11] != "":
        raise TableFormatError("ko_initial[11] (silent ieung) must be empty")
    if tables.ko_final[0] != "":
        raise TableFormatError("ko_final[0] (no final) must be empty")
    for block_start, block_end in ((0x3041, 0x3096), (0x30A1, 0x30F6)):
        for cp in range(block_start, block_end + 1):
            c = chr(cp)
            if c in _SOKUON:
                continue
            if c not in kana:
                raise TableFormatError(f"kana table misses {c!r} (U+{cp:04X})")
    return tables


def romanize_syllable(syllable: str, tables: RomanizationTables) -> str:
    j = decompose_hangul(syllable)
    return tables.ko_initial[j.initial] + tables.ko_medial[j.medial] + tables.ko_final[j.final]


def kana_to_roman(kana: str, tables: RomanizationTables) -> str:
    """Transliterate a kana string to Hepburn, literally (no macrons).

    Sokuon doubles the next syllable's initial consonant ('t' before 'ch');
    a trailing or isolated sokuon falls back to its own small-tsu reading.
    The prolonged sound mark repeats the previous vowel.
    """
    out: list[str] = []
    pending_sokuon = False
    i = 0
    n = len(kana)
    while i < n:
        c = kana[i]
        if c in _SOKUON:
            pending_sokuon = True
            i += 1
            continue
        if c in _CHOON:
            prev = "".join(out)
            last_vowel = next((ch for ch in reversed(prev) if ch in _VOWELS), None)
            out.append(last_vowel if last_vowel else c)
            i += 1
            continue
        roman = None
        if i + 1 < n and kana[i + 1] in _SMALL_Y:
            roman = tables.kana_map.get(c + kana[i + 1])
            if roman is not None:
                i += 2
        if roman is None:
            roman = tables.kana_map.get(c)
            if roman is None:
                out.append(c)  # punctuation / Latin / unexpected char passthrough
                i += 1
                continue
            i += 1
        if pending_sokuon:
            if roman.startswith("ch"):
                roman = "t" + roman
            elif roman and roman[0] not in _VOWELS and roman[0].isalpha():
                roman = roman[0] + roman
            pending_sokuon = False
        out.append(roman)
    if pending_sokuon:
        out.append("tsu")
    return "".join(out)


def _has_letter(s: str) -> bool:
    return any(unicodedata.category(c).startswith("L") for c in s)


def _all_latin(s: str) -> bool:
    letters = [c for c in s if unicodedata.category(c).startswith("L")]
    return bool(letters) and all("LATIN" in unicodedata.name(c, "") for c in letters)


def _has_kanji(s: str) -> bool:
    return any(0x4E00 <= ord(c) <= 0x9FFF or 0x3400 <= ord(c) <= 0x4DBF
               or 0xF900 <= ord(c) <= 0xFAFF for c in s)


def strip_tone_marks(s: str) -> str:
    """Drop combining diacritics, normalizing tone-marked romanization to bare Latin."""
    decomposed = unicodedata.normalize("NFD", s)
    return unicodedata.normalize(
        "NFC", "".join(c for c in decomposed if unicodedata.category(c) != "Mn"))


def romanize_word(surface: str, lang: LanguageId, lex: Lexicon,
                  tables: RomanizationTables, strip_tones: bool = False) -> tuple[str, bool]:
    """Romanize one word surface; returns (roman, oov_flag).

    OOV words pass through unchanged (flag True) rather than being dropped, so
    the word streams stay aligned. Non-letter words and already-Latin words are
    their own romanization for every language.
    """
    if not _has_letter(surface) or _all_latin(surface) or lang is LanguageId.VI:
        return surface if not strip_tones else strip_tone_marks(surface), False

    roman: Optional[str] = None
    oov = False
    if lang is LanguageId.KO:
        parts = []
        for c in surface:
            if HANGUL_BASE <= ord(c) <= HANGUL_LAST:
                parts.append(romanize_syllable(c, tables))
            else:
                parts.append(c)
        roman = "".join(parts)
    elif lang is LanguageId.ZH:
        entry = lex.get(surface)
        if entry is not None and entry.pinyin:
            roman = entry.pinyin
        else:
            parts = []
            for c in surface:
                e = lex.get(c)
                if e is None or not e.pinyin:
                    parts = None
                    break
                parts.append(e.pinyin)
            if parts is not None:
                roman = "".join(parts)
    elif lang is LanguageId.JA:
        if _has_kanji(surface):
            entry = lex.get(surface)
            if entry is not None and entry.reading:
                roman = kana_to_roman(entry.reading, tables)
        else:
            roman = kana_to_roman(surface, tables)
    else:  # EN and any residual Latin-script case
        roman = surface

    if roman is None:
        roman, oov = surface, True
    if strip_tones:
        roman = strip_tone_marks(roman)
    return roman, oov


def romanize_utterance(u: Utterance, lex: Lexicon, tables: RomanizationTables,
                       strip_tones: bool = False) -> Utterance:
    """Fill the roman field of every word; word count (the alignment M) is unchanged."""
    words = []
    for w in u.words:
        roman, oov = romanize_word(w.surface, u.lang, lex, tables, strip_tones)
        words.append(w.with_roman(roman, oov=oov))
    return Utterance(lang=u.lang, text=u.text, words=tuple(words))

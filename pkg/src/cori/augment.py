"""Bilingual-dictionary code-switching and the two-view augmentation.

Each dictionary-covered word is independently replaced with probability
``ratio`` (a per-word Bernoulli draw), choosing uniformly among the word's
translations across target languages. A switch touches only the selected
view: the ortho view swaps the surface, the roman view swaps the romanization.
Word count never changes.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from .corpus import LanguageId, Utterance, Word

log = logging.getLogger(__name__)


class DictionaryFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Translation:
    lang: LanguageId
    surface: str
    roman: str


@dataclass(frozen=True)
class BilingualDictionary:
    src_lang: LanguageId
    entries: dict[str, tuple[Translation, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, surface: str) -> tuple[Translation, ...]:
        return self.entries.get(surface, ())

    def target_langs(self) -> set[LanguageId]:
        return {t.lang for ts in self.entries.values() for t in ts}


def load_dictionary(path: Union[str, Path], src_lang: LanguageId,
                    single_target: Optional[LanguageId] = None) -> BilingualDictionary:
    """Load TSV ``src_surface <TAB> tgt_lang <TAB> tgt_surface <TAB> tgt_roman``.

    Every kept entry carries both a surface and a roman so either view can be
    switched. ``single_target`` restricts switching to one target language.
    """
    path = Path(path)
    entries: dict[str, list[Translation]] = {}
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise DictionaryFormatError(
                    f"{path}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
            src, tgt_lang, tgt_surface, tgt_roman = cols
            if not src or not tgt_surface or not tgt_roman:
                raise DictionaryFormatError(f"{path}:{lineno}: empty translation field")
            lang = LanguageId.parse(tgt_lang)
            if single_target is not None and lang is not single_target:
                continue
            entries.setdefault(src, []).append(
                Translation(lang=lang, surface=tgt_surface, roman=tgt_roman))
    return BilingualDictionary(src_lang=src_lang,
                               entries={k: tuple(v) for k, v in entries.items()})


@dataclass(frozen=True)
class AugmentationConfig:
    ratio: float
    seed: int
    view: str = "ortho"  # "ortho" or "roman"

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio {self.ratio} not in [0, 1]")
        if self.view not in ("ortho", "roman"):
            raise ValueError(f"view must be 'ortho' or 'roman', got {self.view!r}")


def _switched_word(w: Word, t: Translation, view: str) -> Word:
    if view == "ortho":
        tokens = tuple(t.surface.split(" ")) if " " in t.surface else (t.surface,)
        # char_span keeps pointing into the anchor text; switched utterances
        # are training inputs, not re-alignable corpus entries.
        return replace(w, surface=t.surface, tokens=tokens)
    return replace(w, roman=t.roman)


def code_switch(u: Utterance, dictionary: BilingualDictionary, cfg: AugmentationConfig,
                rng: Optional[random.Random] = None) -> Utterance:
    """Replace dictionary-covered words with probability cfg.ratio in the chosen view.

    Deterministic for a fixed (utterance, dictionary, cfg); pass an explicit
    rng to draw several utterances from one seeded stream.
    """
    if rng is None:
        rng = random.Random(cfg.seed)
    words = []
    for w in u.words:
        translations = dictionary.lookup(w.surface)
        if translations and rng.random() < cfg.ratio:
            t = translations[rng.randrange(len(translations))]
            words.append(_switched_word(w, t, cfg.view))
        else:
            words.append(w)
    return Utterance(lang=u.lang, text=u.text, words=tuple(words))


def multi_view(u: Utterance, dictionary: BilingualDictionary,
               cfg_pair: tuple[AugmentationConfig, AugmentationConfig]
               ) -> tuple[Utterance, Utterance]:
    """Two positive views of the anchor: switching on the ortho stream only,
    and on the roman stream only. Both keep the anchor's word count; the
    replacement masks of the two views are drawn independently."""
    cfg1, cfg2 = cfg_pair
    pos1 = code_switch(u, dictionary, replace(cfg1, view="ortho"))
    pos2 = code_switch(u, dictionary, replace(cfg2, view="roman"))
    return pos1, pos2

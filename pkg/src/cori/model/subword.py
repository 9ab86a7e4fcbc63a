"""Byte-fallback unigram subword vocabulary trained on the working corpus.

Pieces are frequent substrings scored by log relative frequency; encoding
picks the maximum-likelihood segmentation by Viterbi search. Characters not
covered by any piece fall back to their UTF-8 bytes, so every non-empty
string encodes to at least one id.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from typing import Iterable, Sequence


class DegenerateWordError(ValueError):
    """A word produced zero subword pieces (only the empty string does)."""


class SubwordVocab:
    def __init__(self, pieces: dict[str, float]):
        # ids: 0..255 raw bytes, then learned pieces in sorted order
        self.pieces = dict(pieces)
        self.id_of = {f"<0x{b:02X}>": b for b in range(256)}
        for i, piece in enumerate(sorted(self.pieces)):
            self.id_of[piece] = 256 + i
        self.piece_of = {v: k for k, v in self.id_of.items()}
        self.max_piece_len = max((len(p) for p in self.pieces), default=1)
        self._byte_score = min(self.pieces.values(), default=0.0) - 10.0

    def __len__(self) -> int:
        return 256 + len(self.pieces)

    @classmethod
    def train(cls, texts: Iterable[str], max_pieces: int = 2000,
              max_piece_len: int = 8, min_freq: int = 2) -> "SubwordVocab":
        counts: Counter[str] = Counter()
        for text in texts:
            n = len(text)
            for i in range(n):
                for j in range(i + 1, min(i + max_piece_len, n) + 1):
                    counts[text[i:j]] += 1
        # keep every seen character so corpus text never needs byte fallback
        kept = {p for p, c in counts.items() if len(p) == 1}
        ranked = sorted((p for p, c in counts.items() if len(p) > 1 and c >= min_freq),
                        key=lambda p: (-counts[p], p))
        for p in ranked:
            if len(kept) >= max_pieces:
                break
            kept.add(p)
        total = sum(counts[p] for p in kept)
        pieces = {p: math.log(counts[p] / total) for p in kept}
        return cls(pieces)

    def encode(self, text: str) -> list[int]:
        """Maximum-likelihood segmentation into piece ids (byte ids as fallback)."""
        if not text:
            raise DegenerateWordError("cannot encode the empty string")
        n = len(text)
        NEG = -math.inf
        best = [NEG] * (n + 1)
        back: list[tuple[int, list[int]]] = [(-1, [])] * (n + 1)
        best[0] = 0.0
        for i in range(n):
            if best[i] == NEG:
                continue
            # byte fallback always provides an arc of length 1
            b_ids = [self.id_of[f"<0x{b:02X}>"] for b in text[i].encode("utf-8")]
            score = best[i] + self._byte_score * len(b_ids)
            if score > best[i + 1]:
                best[i + 1] = score
                back[i + 1] = (i, b_ids)
            for j in range(i + 1, min(i + self.max_piece_len, n) + 1):
                piece = text[i:j]
                s = self.pieces.get(piece)
                if s is None:
                    continue
                score = best[i] + s
                if score > best[j]:
                    best[j] = score
                    back[j] = (i, [self.id_of[piece]])
        ids: list[int] = []
        pos = n
        while pos > 0:
            prev, arc = back[pos]
            ids[:0] = arc
            pos = prev
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        out: list[bytes] = []
        for i in ids:
            piece = self.piece_of[i]
            if piece.startswith("<0x") and piece.endswith(">"):
                out.append(bytes([int(piece[3:5], 16)]))
            else:
                out.append(piece.encode("utf-8"))
        return b"".join(out).decode("utf-8", errors="replace")

    def to_json(self) -> str:
        return json.dumps(self.pieces, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, payload: str) -> "SubwordVocab":
        return cls(json.loads(payload))

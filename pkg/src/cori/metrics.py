"""Representation-discrepancy (linear CKA) and downstream task metrics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class EmbeddingMatrix:
    """n sample rows by p feature dims, with row identifiers."""
    ids: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        if self.rows.ndim != 2 or len(self.ids) != self.rows.shape[0]:
            raise ValueError("ids and rows disagree on sample count")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("embedding matrix contains non-finite entries")


def read_embeddings(path: Union[str, Path]) -> EmbeddingMatrix:
    """Read the TSV embedding dump: ``id <TAB> v_1 <TAB> ... <TAB> v_p``."""
    ids: list[str] = []
    rows: list[list[float]] = []
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise ValueError(f"{path}:{lineno}: expected id plus at least one value")
            ids.append(cols[0])
            rows.append([float(v) for v in cols[1:]])
    return EmbeddingMatrix(ids=tuple(ids), rows=np.asarray(rows, dtype=np.float64))


def write_embeddings(emb: EmbeddingMatrix, path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for i, row in zip(emb.ids, emb.rows):
            f.write(i + "\t" + "\t".join(f"{v:.17g}" for v in row) + "\n")


def cka(x: Union[EmbeddingMatrix, np.ndarray], y: Union[EmbeddingMatrix, np.ndarray]) -> float:
    """Linear centered kernel alignment between two representation matrices.

    Rows i of x and y must encode the same underlying sample. With
    column-centered Xc, Yc:  ||Yc' Xc||_F^2 / (||Xc' Xc||_F * ||Yc' Yc||_F).
    The result lies in [0, 1]; 1 means identical up to orthogonal transform
    and isotropic scaling.
    """
    xm = x.rows if isinstance(x, EmbeddingMatrix) else np.asarray(x, dtype=np.float64)
    ym = y.rows if isinstance(y, EmbeddingMatrix) else np.asarray(y, dtype=np.float64)
    if xm.shape[0] != ym.shape[0]:
        raise ValueError(f"row counts differ: {xm.shape[0]} vs {ym.shape[0]}")
    if xm.shape[0] < 2:
        raise ValueError("CKA needs at least 2 rows")
    xc = xm - xm.mean(axis=0, keepdims=True)
    yc = ym - ym.mean(axis=0, keepdims=True)
    cross = np.linalg.norm(yc.T @ xc, "fro") ** 2
    nx = np.linalg.norm(xc.T @ xc, "fro")
    ny = np.linalg.norm(yc.T @ yc, "fro")
    if nx == 0.0 or ny == 0.0:
        raise ValueError("all-constant matrix: zero norm after centering")
    return float(cross / (nx * ny))


def accuracy(pred: Sequence, gold: Sequence) -> float:
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gold)}")
    if not gold:
        return 0.0
    return sum(p == g for p, g in zip(pred, gold)) / len(gold)


def _entities(tags: Sequence[str], sample_index: int) -> set[tuple[int, int, str]]:
    """Extract (start, end_inclusive, type) entities from a BIO tag sequence."""
    out: set[tuple[int, int, str]] = set()
    start, etype = None, None
    for i, tag in enumerate(tags):
        if tag == "O":
            if start is not None:
                out.add((start, i - 1, etype))
                start, etype = None, None
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            raise ValueError(f"sample {sample_index}: malformed BIO tag {tag!r} at {i}")
        if tag[0] == "B":
            if start is not None:
                out.add((start, i - 1, etype))
            start, etype = i, tag[2:]
        else:
            if start is None or etype != tag[2:]:
                raise ValueError(
                    f"sample {sample_index}: I-{tag[2:]} at {i} continues no open entity")
    if start is not None:
        out.add((start, len(tags) - 1, etype))
    return out


def repair_bio(tags: Sequence[str]) -> list[str]:
    """Repair model-predicted tag sequences: an I-X continuing no open X entity
    becomes B-X. Gold tags should never need this."""
    out: list[str] = []
    prev = "O"
    for tag in tags:
        if tag.startswith("I-") and (prev == "O" or prev[2:] != tag[2:]):
            tag = "B-" + tag[2:]
        out.append(tag)
        prev = tag
    return out


def span_f1(pred: Sequence[Sequence[str]],
            gold: Sequence[Sequence[str]]) -> tuple[float, float, float]:
    """Entity-level exact-boundary-and-type precision/recall/F1 over BIO tags."""
    if len(pred) != len(gold):
        raise ValueError(f"sample count mismatch: {len(pred)} vs {len(gold)}")
    n_pred = n_gold = n_hit = 0
    for k, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise ValueError(f"sample {k}: tag lengths differ ({len(p)} vs {len(g)})")
        pe = _entities(p, k)
        ge = _entities(g, k)
        n_pred += len(pe)
        n_gold += len(ge)
        n_hit += len(pe & ge)
    precision = n_hit / n_pred if n_pred else 0.0
    recall = n_hit / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def normalize_answer(s: str) -> str:
    """EM normalization: trim, collapse internal whitespace, lowercase.

    No article stripping: that SQuAD convention is meaningless for CJKV.
    CJK characters are caseless, so they compare verbatim.
    """
    return " ".join(s.split()).lower()


def exact_match(pred_answers: Sequence[str], gold_answers: Sequence[str]) -> float:
    if len(pred_answers) != len(gold_answers):
        raise ValueError(f"length mismatch: {len(pred_answers)} vs {len(gold_answers)}")
    if not gold_answers:
        return 0.0
    hits = sum(normalize_answer(p) == normalize_answer(g)
               for p, g in zip(pred_answers, gold_answers))
    return hits / len(gold_answers)

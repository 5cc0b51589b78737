"""Similarity scores between scene images and danger descriptors.

Scores normally come from an offline vision-language model and are read from
CSV. ``synthesize_scores`` fabricates them from ground truth so the rest of
the pipeline can run closed-loop without any model.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .env_graph import LEVELS, EnvironmentGraph


class ScoreError(ValueError):
    pass


@dataclass(frozen=True)
class DescriptorSet:
    type: str
    descriptors: tuple[str, str, str, str, str]  # index l - 1 holds the level-l descriptor

    def __post_init__(self):
        if len(self.descriptors) != 5:
            raise ScoreError(f"descriptor set {self.type!r} needs exactly 5 levels, got {len(self.descriptors)}")


@dataclass(frozen=True)
class DescriptorCorpus:
    sets: tuple[DescriptorSet, ...]

    def __post_init__(self):
        seen = set()
        for s in self.sets:
            for d in s.descriptors:
                if d in seen:
                    raise ScoreError(f"descriptor id {d!r} appears twice in corpus")
                seen.add(d)

    @property
    def types(self) -> tuple[str, ...]:
        return tuple(s.type for s in self.sets)

    def subset(self, types: Iterable[str]) -> "DescriptorCorpus":
        want = set(types)
        unknown = want - set(self.types)
        if unknown:
            raise ScoreError(f"corpus has no descriptor set for {sorted(unknown)}")
        return DescriptorCorpus(tuple(s for s in self.sets if s.type in want))

    def to_list(self) -> list[dict]:
        return [
            {"type": s.type, "descriptors": {str(l): d for l, d in zip(LEVELS, s.descriptors)}}
            for s in self.sets
        ]


def corpus_from_list(data: Sequence[Mapping]) -> DescriptorCorpus:
    try:
        sets = []
        for rec in data:
            desc = {int(k): str(v) for k, v in rec["descriptors"].items()}
            if sorted(desc) != list(LEVELS):
                raise ScoreError(f"descriptor set {rec['type']!r} must map levels 1..5, got {sorted(desc)}")
            sets.append(DescriptorSet(str(rec["type"]), tuple(desc[l] for l in LEVELS)))
        return DescriptorCorpus(tuple(sets))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ScoreError(f"malformed corpus: {exc!r}") from exc


def load_corpus(path) -> DescriptorCorpus:
    try:
        return corpus_from_list(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ScoreError(f"{path}: not valid JSON ({exc})") from exc


def save_corpus(corpus: DescriptorCorpus, path) -> None:
    Path(path).write_text(json.dumps(corpus.to_list(), indent=2) + "\n")


def default_corpus() -> DescriptorCorpus:
    return load_corpus(Path(__file__).with_name("data") / "corpus.json")


class ScoreMatrix:
    """Immutable map (image id, descriptor id) -> similarity score."""

    def __init__(self, entries: Optional[Mapping[tuple[str, str], float]] = None):
        self._entries: dict[tuple[str, str], float] = {}
        for key, val in (entries or {}).items():
            val = float(val)
            if not math.isfinite(val):
                raise ScoreError(f"non-finite score for {key}")
            self._entries[(str(key[0]), str(key[1]))] = val

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def __eq__(self, other):
        return isinstance(other, ScoreMatrix) and self._entries == other._entries

    def __getitem__(self, key: tuple[str, str]) -> float:
        try:
            return self._entries[key]
        except KeyError:
            raise ScoreError(f"missing score for image {key[0]!r}, descriptor {key[1]!r}") from None

    def items(self):
        return self._entries.items()

    def images(self) -> list[str]:
        return sorted({i for i, _ in self._entries})

    def descriptors(self) -> list[str]:
        return sorted({d for _, d in self._entries})

    def level_scores(self, image: str, dset: DescriptorSet) -> np.ndarray:
        return np.array([self[(image, d)] for d in dset.descriptors])


def load_scores(path) -> ScoreMatrix:
    entries: dict[tuple[str, str], float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and row[:3] == ["image_id", "descriptor_id", "score"]):
                continue
            if len(row) != 3:
                raise ScoreError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            key = (row[0].strip(), row[1].strip())
            try:
                val = float(row[2])
            except ValueError:
                raise ScoreError(f"{path}:{lineno}: score {row[2]!r} is not a number") from None
            if not math.isfinite(val):
                raise ScoreError(f"{path}:{lineno}: non-finite score")
            if key in entries:
                raise ScoreError(f"{path}:{lineno}: duplicate key {key}")
            entries[key] = val
    return ScoreMatrix(entries)


def save_scores(scores: ScoreMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "descriptor_id", "score"])
        for (img, desc), val in sorted(scores.items()):
            w.writerow([img, desc, repr(val)])


@dataclass(frozen=True)
class ScoreFidelity:
    """Noise model for synthetic scores (values clamped to [0, 1])."""

    sigma: float = 0.35
    mu_hi: float = 0.8
    mu_lo: float = 0.3
    # Score mean for matching-type descriptors one level off the truth; None disables.
    leak: Optional[float] = None


def _matches(hazard: Optional[str], truth: int, dtype: str, level: int) -> bool:
    if level != truth:
        return False
    # "none" vertices are described by the level-1 entry of every danger type.
    return hazard is None or hazard == "none" or hazard == dtype


def synthesize_scores(graph: EnvironmentGraph, corpus: DescriptorCorpus,
                      fidelity: ScoreFidelity = ScoreFidelity(), seed: int = 0) -> ScoreMatrix:
    rng = np.random.default_rng(seed)
    entries = {}
    for v in graph.vertices:
        images = graph.scene(v)
        if not images:
            raise ScoreError(f"vertex {v} has an empty scene")
        truth, hazard = graph.level(v), graph.hazard(v)
        for img in images:
            for dset in corpus.sets:
                for level, desc in zip(LEVELS, dset.descriptors):
                    if _matches(hazard, truth, dset.type, level):
                        mean = fidelity.mu_hi
                    elif fidelity.leak is not None and abs(level - truth) == 1 and (
                            _matches(hazard, level, dset.type, level)):
                        mean = fidelity.leak
                    else:
                        mean = fidelity.mu_lo
                    noise = rng.normal(0.0, fidelity.sigma) if fidelity.sigma > 0 else 0.0
                    entries[(img, desc)] = float(min(1.0, max(0.0, mean + noise)))
    return ScoreMatrix(entries)


def recall_at_k(scores: ScoreMatrix, truth: Mapping[str, str], k: int,
                images: Optional[Sequence[str]] = None) -> float:
    """Percentage of captions whose true image ranks in the top ``k``.

    ``truth`` maps caption (descriptor) id -> true image id. Scores are keyed
    (image, caption). Ties rank the smaller image id first.
    """
    if k < 1:
        raise ScoreError(f"k must be a positive integer, got {k}")
    if not truth:
        return 0.0
    candidates = sorted(images) if images is not None else scores.images()
    hits = 0
    for caption, true_img in truth.items():
        ranked = sorted(candidates, key=lambda img: (-scores[(img, caption)], img))
        if true_img in ranked[:k]:
            hits += 1
    return 100.0 * hits / len(truth)

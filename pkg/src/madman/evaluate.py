"""Zero-shot recognition, the recognition filter and binding accuracy.

A scorer is anything with ``score(images, caption_ids) -> scores`` where
``images`` is (N, 96, 96, 3) uint8, ``caption_ids`` is (N, K, L) and the
result is (N, K). Only comparisons between scores of the same image are
used, so any monotone rescaling of a scorer leaves every decision intact.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np
from scipy import stats

from .attributes import CATEGORY_BY_NAME, CATEGORY_NAMES
from .captions import CaptionSpec, substitute, swap_attribute
from .data import SampleRecord
from .errors import AllSamplesFiltered, EmptyEvalSet, InsufficientSeeds

FILTER_FACTOR = 1.1
BINDING_CHANCE = 0.5
TABLE_ORDER = ("color", "scaling", "fracture", "rotation", "swelling", "thickness")


class Scorer(Protocol):
    def score(self, images: np.ndarray, caption_ids: np.ndarray) -> np.ndarray: ...


def target_values(target: str) -> tuple:
    if target == "object":
        return tuple(range(10))
    return CATEGORY_BY_NAME[target].values


def _gt_value(caption: CaptionSpec, slot: int, target: str):
    phrase = caption.phrases[slot]
    return phrase.digit if target == "object" else phrase.attribute_map[target]


def candidate_captions(record: SampleRecord, target: str) -> list[CaptionSpec]:
    """[ground truth, false captions for slot 0, false captions for slot 1, swap]."""
    cap = record.caption
    if len(cap.phrases) != 2:
        raise ValueError(f"record {record.sample_id}: evaluation needs a two-object caption")
    out = [cap]
    for slot in (0, 1):
        gt = _gt_value(cap, slot, target)
        out.extend(substitute(cap, slot, target, v) for v in target_values(target) if v != gt)
    out.append(swap_attribute(cap, target))
    return out


@dataclass
class RecognitionResult:
    target: str
    accuracy: float
    n_candidates: int
    correct: np.ndarray = field(repr=False)       # (N, 2) bool, per object slot
    scores: np.ndarray | None = field(default=None, repr=False)   # (N, 2V) raw scores

    @property
    def p_chance(self) -> float:
        return 1.0 / self.n_candidates

    @property
    def n_records(self) -> int:
        return len(self.correct)


@dataclass
class BindingResult:
    attribute: str
    kept: bool
    n_total: int
    n_kept: int
    binding_accuracy: float | None
    binding_accuracy_unfiltered: float
    recognition_accuracy: float
    status: str = "ok"      # ok | filtered | all-samples-filtered

    def to_dict(self) -> dict:
        return asdict(self)


def score_candidates(scorer: Scorer, records: Sequence[SampleRecord], target: str) -> np.ndarray:
    if not records:
        raise EmptyEvalSet(f"no evaluation records for {target!r}")
    images = np.stack([r.image for r in records])
    ids = np.stack([np.stack([c.ids() for c in candidate_captions(r, target)]) for r in records])
    scores = np.asarray(scorer.score(images, ids), dtype=np.float64)
    if scores.shape != ids.shape[:2]:
        raise ValueError(f"scorer returned shape {scores.shape}, expected {ids.shape[:2]}")
    return scores


def recognition_accuracy(scorer: Scorer, records: Sequence[SampleRecord], target: str,
                         scores: np.ndarray | None = None) -> RecognitionResult:
    """Fraction of (record, slot) pairs where the true caption strictly beats every false one."""
    if scores is None:
        scores = score_candidates(scorer, records, target)
    v = len(target_values(target))
    gt = scores[:, 0]
    slot0 = scores[:, 1:v]
    slot1 = scores[:, v:2 * v - 1]
    correct = np.stack([gt > slot0.max(axis=1), gt > slot1.max(axis=1)], axis=1)
    return RecognitionResult(target, float(correct.mean()), v, correct, scores)


def binding_accuracy(scorer: Scorer, records: Sequence[SampleRecord], attribute: str,
                     recog: RecognitionResult) -> BindingResult:
    """Recognition-filtered binding accuracy for one attribute.

    Raises AllSamplesFiltered when the attribute passes the attribute-level
    filter but no record has it recognized for both objects.
    """
    if recog.target != attribute:
        raise ValueError(f"recognition result is for {recog.target!r}, not {attribute!r}")
    scores = recog.scores
    if scores is None or len(scores) != len(records):
        scores = score_candidates(scorer, records, attribute)
    wins = scores[:, 0] > scores[:, -1]
    n_total = len(records)
    unfiltered = float(wins.mean())
    kept = recog.accuracy > FILTER_FACTOR * recog.p_chance
    if not kept:
        return BindingResult(attribute, False, n_total, 0, None, unfiltered, recog.accuracy, "filtered")
    both = recog.correct.all(axis=1)
    n_kept = int(both.sum())
    if n_kept == 0:
        raise AllSamplesFiltered(f"{attribute}: no record recognized for both objects")
    return BindingResult(attribute, True, n_total, n_kept, float(wins[both].mean()), unfiltered,
                         recog.accuracy)


@dataclass
class EvalReport:
    recognition: dict[str, float]
    binding: dict[str, BindingResult]

    def to_dict(self) -> dict:
        return {"recognition": dict(self.recognition),
                "binding": {k: v.to_dict() for k, v in self.binding.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def binding_values(self, unfiltered: bool = False) -> dict[str, float | None]:
        if unfiltered:
            return {k: v.binding_accuracy_unfiltered for k, v in self.binding.items()}
        return {k: v.binding_accuracy for k, v in self.binding.items()}

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([a.capitalize() for a in TABLE_ORDER])
        w.writerow([format_cell(self.binding[a].binding_accuracy) if a in self.binding else ""
                    for a in TABLE_ORDER])
        return buf.getvalue()


def format_cell(value: float | None) -> str:
    return "filtered" if value is None else f"{100.0 * value:.2f}"


def evaluate(scorer: Scorer, eval_sets: Mapping[str, Sequence[SampleRecord]]) -> EvalReport:
    """Recognition for every target and binding for every attribute target, in one pass each."""
    recognition, binding = {}, {}
    for target, records in eval_sets.items():
        recog = recognition_accuracy(scorer, records, target)
        recognition[target] = recog.accuracy
        if target in CATEGORY_NAMES:
            try:
                binding[target] = binding_accuracy(scorer, records, target, recog)
            except AllSamplesFiltered:
                wins = recog.scores[:, 0] > recog.scores[:, -1]
                binding[target] = BindingResult(target, True, len(records), 0, None,
                                                float(wins.mean()), recog.accuracy,
                                                "all-samples-filtered")
    return EvalReport(recognition, binding)


def aggregate_seeds(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float]:
    """Mean and half-width of the Student-t confidence interval across seeds."""
    vals = np.asarray([v for v in values], dtype=np.float64)
    if len(vals) < 2:
        raise InsufficientSeeds(f"need at least 2 seed results, got {len(vals)}")
    mean = float(vals.mean())
    sd = float(vals.std(ddof=1))
    half = float(stats.t.ppf(0.5 + confidence / 2.0, len(vals) - 1) * sd / math.sqrt(len(vals)))
    return mean, half

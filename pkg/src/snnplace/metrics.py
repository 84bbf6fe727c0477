"""Evaluation metrics, per-neuron precision analysis, and the SAD baseline.

Matching is scored with zero ground-truth tolerance: a query counts as
correct only when the predicted place id equals the true one exactly.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleModel, MatchResult, flags_for_theta, fuse_scores
from .errors import ConfigError
from .expert import UNASSIGNED


@dataclass(frozen=True)
class EvalRecord:
    """One scored query: ground truth plus the full ranked prediction."""

    truth: int
    place_ids: np.ndarray   # descending score order
    scores: np.ndarray

    @property
    def top(self) -> int:
        return int(self.place_ids[0])

    @property
    def correct(self) -> bool:
        return self.top == self.truth

    @property
    def confidence(self) -> float:
        """Winning place's summed spike count (the only available magnitude)."""
        return float(self.scores[0])


def records_from_matches(matches: list[MatchResult], truths) -> list[EvalRecord]:
    return [
        EvalRecord(truth=int(t), place_ids=m.place_ids, scores=m.scores)
        for m, t in zip(matches, truths)
    ]


def records_from_responses(
    model: EnsembleModel,
    responses: np.ndarray,
    truths,
    theta: float | None = ...,
) -> list[EvalRecord]:
    """Score cached per-expert responses, optionally at an overriding threshold.

    ``responses`` has shape (n_queries, n_experts, n_excitatory); passing
    ``theta`` re-derives the hyperactive flags from each expert's stored
    reference totals, which is exactly what a fresh detect-and-match run
    would use.
    """
    flags = None
    if theta is not ...:
        flags = [flags_for_theta(ex.reference_totals, theta) for ex in model.experts]
    matches = [fuse_scores(model, responses[q], flags) for q in range(responses.shape[0])]
    return records_from_matches(matches, truths)


def precision_at_100_recall(records: list[EvalRecord]) -> float:
    """Fraction of queries whose forced top-1 match is exactly correct."""
    if not records:
        raise ConfigError("cannot score an empty record set")
    return sum(r.correct for r in records) / len(records)


def recall_at_n(records: list[EvalRecord], n: int) -> float:
    """Fraction of queries whose true place appears in the top n."""
    if n < 1:
        raise ConfigError("recall_at_n needs n >= 1")
    if not records:
        raise ConfigError("cannot score an empty record set")
    hits = sum(r.truth in r.place_ids[:n] for r in records)
    return hits / len(records)


def pr_curve(records: list[EvalRecord]) -> list[tuple[float, float, float]]:
    """Precision/recall while sweeping an acceptance threshold on confidence.

    At each threshold t (descending), queries with confidence >= t are
    accepted; precision is scored over accepted queries and recall is
    accepted-and-correct over all queries.  The final point accepts
    everything, so its precision equals precision_at_100_recall.
    """
    if not records:
        return []
    conf = np.array([r.confidence for r in records])
    correct = np.array([r.correct for r in records])
    points = []
    for t in sorted(set(conf), reverse=True):
        accepted = conf >= t
        tp = int((accepted & correct).sum())
        points.append((float(t), tp / int(accepted.sum()), tp / len(records)))
    return points


@dataclass(frozen=True)
class NeuronPrecisionRecord:
    """How often one neuron's firing coincided with its own place being queried."""

    expert: int
    neuron: int
    assigned_place: int      # global id
    hyperactive: bool
    fired_correct: int       # queries where it fired and truth == assigned place
    fired_total: int         # queries where it fired at all

    @property
    def precision(self) -> float:
        return self.fired_correct / self.fired_total


def neuron_precision_analysis(
    model: EnsembleModel,
    responses: np.ndarray,
    truths,
) -> tuple[list[NeuronPrecisionRecord], dict]:
    """Per-neuron firing precision over a query set, split by hyperactivity.

    A neuron "fires" on a query when its count is nonzero.  Unassigned
    neurons and neurons that never fired carry no precision and are only
    tallied in the summary.
    """
    truths = np.asarray(truths)
    records = []
    n_never_fired = 0
    n_unassigned = 0
    for i, expert in enumerate(model.experts):
        fired = responses[:, i, :] > 0                      # (n_queries, K_E)
        for e in range(expert.n_excitatory):
            if expert.assignments[e] == UNASSIGNED:
                n_unassigned += 1
                continue
            total = int(fired[:, e].sum())
            if total == 0:
                n_never_fired += 1
                continue
            place = expert.global_start + int(expert.assignments[e])
            correct = int((fired[:, e] & (truths == place)).sum())
            records.append(NeuronPrecisionRecord(
                expert=i, neuron=e, assigned_place=place,
                hyperactive=bool(expert.hyperactive[e]),
                fired_correct=correct, fired_total=total,
            ))
    summary = {
        "n_never_fired": n_never_fired,
        "n_unassigned": n_unassigned,
    }
    for label, group in (
        ("hyperactive", [r.precision for r in records if r.hyperactive]),
        ("non_hyperactive", [r.precision for r in records if not r.hyperactive]),
    ):
        if group:
            q1, q2, q3 = np.percentile(group, [25, 50, 75])
            summary[label] = {
                "n": len(group), "mean": float(np.mean(group)),
                "q1": float(q1), "median": float(q2), "q3": float(q3),
            }
        else:
            summary[label] = {"n": 0}
    return records, summary


def sad_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of absolute pixel differences between two same-sized images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def sad_match(query: np.ndarray, references: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rank reference places by pixel-wise distance to the query (ascending).

    ``references`` is (place_count, H, W) or (n_traverses, place_count, H,
    W); with multiple traverses each place scores its minimum distance.
    All images must have passed the same resize + patch-normalize steps as
    the spiking path.  Ties rank the lower place id first.
    """
    query = np.asarray(query, dtype=np.float64)
    references = np.asarray(references, dtype=np.float64)
    if references.ndim == 3:
        references = references[None]
    if references.shape[-2:] != query.shape:
        raise ConfigError(
            f"reference image shape {references.shape[-2:]} != query {query.shape}"
        )
    dists = np.abs(references - query).sum(axis=(-2, -1)).min(axis=0)
    order = np.lexsort((np.arange(dists.size), dists))
    return order.astype(np.int64), dists[order]


def write_pr_curve_csv(path: str | os.PathLike, points) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "precision", "recall"])
        writer.writerows(points)


def write_recall_at_n_csv(path: str | os.PathLike, records, ns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "recall"])
        for n in ns:
            writer.writerow([n, recall_at_n(records, n)])


def write_neuron_precision_csv(path: str | os.PathLike, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "expert", "neuron", "assigned_place", "hyperactive",
            "fired_correct", "fired_total", "precision",
        ])
        for r in records:
            writer.writerow([
                r.expert, r.neuron, r.assigned_place, int(r.hyperactive),
                r.fired_correct, r.fired_total, r.precision,
            ])


def write_scaling_csv(path: str | os.PathLike, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_experts", "mean_query_seconds"])
        writer.writerows(rows)


def write_summary_json(path: str | os.PathLike, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")

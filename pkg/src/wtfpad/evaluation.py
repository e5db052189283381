"""Simplified k-NN website-fingerprinting attack and its evaluations.

The adversary reduces each (possibly padded) trace to a fixed feature
vector of volume, burst and timing statistics, then classifies with an
unweighted k-nearest-neighbor rule over min-max normalized L1 distance.
Closed-world accuracy, a vote-threshold ROC over a binarized
monitored/non-monitored split, and open-world precision-recall curves
quantify how much a defense hurts the attack; all claims made here are
relative (protected versus unprotected), never absolute.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    EmptyTrace,
    InsufficientBackground,
    InsufficientInstances,
    InvalidK,
    InvalidParams,
    NoPositives,
)
from .traces import Corpus, Direction, Trace, instantaneous_bandwidth, interarrival_times

#: Open-world class collecting every page outside the monitored set.
UNMONITORED = "<unmonitored>"

DECILES = tuple(range(10, 100, 10))


@dataclass(frozen=True)
class FeatureConfig:
    """Burst detection and truncation knobs for feature extraction."""

    window: int = 2
    bandwidth_threshold: float = 150_000.0  # two 1500B cells within 20 ms
    first_cells: int = 30


DEFAULT_FEATURES = FeatureConfig()


def _burst_stats(trace: Trace, direction: Direction, config: FeatureConfig) -> tuple[float, float, float]:
    events = trace.filtered(direction)
    if len(events) < max(2, config.window):
        return 0.0, 0.0, 0.0
    bw = [b for _, b in instantaneous_bandwidth(trace, config.window, direction)]
    n_gaps = len(events) - 1
    lengths = []
    run = 0
    for i in range(n_gaps):
        if bw[min(i, len(bw) - 1)] >= config.bandwidth_threshold:
            run += 1
        else:
            if run:
                lengths.append(run + 1)  # packets per burst = gaps + 1
            run = 0
    if run:
        lengths.append(run + 1)
    if not lengths:
        return 0.0, 0.0, 0.0
    return float(len(lengths)), float(np.mean(lengths)), float(max(lengths))


def extract_features(trace: Trace, config: FeatureConfig = DEFAULT_FEATURES) -> np.ndarray:
    """Fixed-length descriptor of a trace as the adversary sees it.

    Control and dummy cells count like any other cell: the on-link
    attacker cannot tell them apart. Layout: per-direction cell and
    byte totals, duration, per-direction burst count/mean/max length,
    the direction signs of the first cells (zero-padded) and the
    inter-arrival deciles.
    """
    if not trace.events:
        raise EmptyTrace("cannot featurize an empty trace")
    out_events = trace.filtered(Direction.OUTGOING)
    in_events = trace.filtered(Direction.INCOMING)
    values = [
        float(len(out_events)),
        float(len(in_events)),
        float(sum(e.size for e in out_events)),
        float(sum(e.size for e in in_events)),
        trace.duration,
    ]
    values.extend(_burst_stats(trace, Direction.OUTGOING, config))
    values.extend(_burst_stats(trace, Direction.INCOMING, config))
    signs = [float(e.direction.value) for e in trace.events[: config.first_cells]]
    signs.extend([0.0] * (config.first_cells - len(signs)))
    values.extend(signs)
    if len(trace.events) >= 2:
        iats = interarrival_times(trace)
        values.extend(float(v) for v in np.percentile(iats, DECILES))
    else:
        values.extend([0.0] * len(DECILES))
    return np.asarray(values, dtype=float)


def features_matrix(
    corpus: Corpus, config: FeatureConfig = DEFAULT_FEATURES
) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and label array for a whole corpus."""
    X = np.vstack([extract_features(t, config) for t in corpus])
    y = np.asarray([t.label for t in corpus], dtype=object)
    return X, y


# --- k-NN core ---

def _normalizer(train: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = train.min(axis=0)
    span = train.max(axis=0) - lo
    span[span == 0] = 1.0  # constant features contribute nothing
    return lo, span


def _neighbor_labels(
    train_X: np.ndarray, train_y: np.ndarray, test_X: np.ndarray, k: int
) -> np.ndarray:
    """Labels of the k nearest training points per test row (stable order)."""
    lo, span = _normalizer(train_X)
    dists = cdist((test_X - lo) / span, (train_X - lo) / span, metric="cityblock")
    order = np.argsort(dists, axis=1, kind="stable")[:, :k]
    return train_y[order]


def _plurality(neighbors: Sequence[str]) -> tuple[str, int]:
    """Most common label; ties break toward the smallest label."""
    counts = Counter(neighbors)
    label = min(counts, key=lambda lbl: (-counts[lbl], lbl))
    return label, counts[label]


def knn_classify(
    train_X: np.ndarray,
    train_y: np.ndarray,
    x: np.ndarray,
    k: int = 5,
    vote_threshold: int = 1,
) -> str | None:
    """Classify one point; None means the vote threshold rejected it.

    Distances are L1 over min-max coordinates normalized on the training
    set only. The plurality label wins when it collects at least
    `vote_threshold` of the k votes.
    """
    train_X = np.asarray(train_X, dtype=float)
    train_y = np.asarray(train_y, dtype=object)
    if not 1 <= k <= len(train_X):
        raise InvalidK(f"k={k} with {len(train_X)} training points")
    if not 1 <= vote_threshold <= k:
        raise InvalidK(f"vote threshold {vote_threshold} outside 1..{k}")
    neighbors = _neighbor_labels(train_X, train_y, np.atleast_2d(x), k)[0]
    label, votes = _plurality(neighbors)
    return label if votes >= vote_threshold else None


def stratified_folds(
    labels: np.ndarray, folds: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Shuffle each label's instances and deal them round-robin."""
    assignments: list[list[int]] = [[] for _ in range(folds)]
    for label in sorted(set(labels)):
        idx = np.flatnonzero(labels == label)
        rng.shuffle(idx)
        for i, j in enumerate(idx):
            assignments[i % folds].append(int(j))
    return [np.asarray(sorted(a), dtype=int) for a in assignments]


@dataclass
class EvalReport:
    """Attack performance metrics for one experiment."""

    accuracy: float | None = None
    tpr: float | None = None
    fpr: float | None = None
    precision: float | None = None
    f1: float | None = None
    auc: float | None = None
    roc_points: list[tuple[float, float]] = field(default_factory=list)
    proc_points: list[tuple[float, float]] = field(default_factory=list)
    random_baseline: float | None = None
    world_size: int | None = None


def _check_fold_support(y: np.ndarray, folds: int) -> None:
    counts = Counter(y)
    short = {lbl: c for lbl, c in counts.items() if c < folds}
    if short:
        raise InsufficientInstances(
            f"{len(short)} labels have fewer than {folds} instances"
        )


def closed_world_eval(
    corpus: Corpus,
    k: int = 5,
    folds: int = 10,
    seed: int = 0,
    config: FeatureConfig = DEFAULT_FEATURES,
    features: tuple[np.ndarray, np.ndarray] | None = None,
) -> EvalReport:
    """Stratified cross-validated closed-world accuracy (equals TPR here)."""
    X, y = features if features is not None else features_matrix(corpus, config)
    _check_fold_support(y, folds)
    rng = np.random.default_rng([seed, 1])
    correct = 0
    for fold in stratified_folds(y, folds, rng):
        mask = np.ones(len(y), dtype=bool)
        mask[fold] = False
        neighbors = _neighbor_labels(X[mask], y[mask], X[fold], k)
        for row, true in zip(neighbors, y[fold]):
            pred, _ = _plurality(row)
            correct += pred == true
    accuracy = correct / len(y)
    return EvalReport(
        accuracy=accuracy, tpr=accuracy, precision=accuracy, f1=accuracy
    )


@dataclass
class BinarizedRoc:
    """Vote-threshold ROC on a half-monitored label split."""

    points: list[tuple[float, float]]
    auc: float
    scores: list[tuple[int, bool]]  # (max monitored votes, truly monitored)
    monitored: frozenset


def roc_binarized(
    corpus: Corpus,
    k: int = 5,
    seed: int = 0,
    folds: int = 10,
    config: FeatureConfig = DEFAULT_FEATURES,
    features: tuple[np.ndarray, np.ndarray] | None = None,
) -> BinarizedRoc:
    """ROC of monitored-page detection, swept over the vote threshold.

    Half the labels become the monitored (positive) class. Predicting
    any monitored page for a monitored instance is a true positive; the
    attacker here only cares whether a page is monitored at all.
    """
    X, y = features if features is not None else features_matrix(corpus, config)
    labels = sorted(set(y))
    if len(labels) < 4 or len(labels) % 2:
        raise InvalidParams("binarized ROC needs an even label count >= 4")
    _check_fold_support(y, folds)
    rng = np.random.default_rng([seed, 2])
    shuffled = list(labels)
    rng.shuffle(shuffled)
    monitored = frozenset(shuffled[: len(shuffled) // 2])

    records = []  # (truly monitored, predicted label monitored, votes, score)
    for fold in stratified_folds(y, folds, rng):
        mask = np.ones(len(y), dtype=bool)
        mask[fold] = False
        neighbors = _neighbor_labels(X[mask], y[mask], X[fold], k)
        for row, true in zip(neighbors, y[fold]):
            counts = Counter(row)
            pred, votes = _plurality(row)
            score = max((counts[lbl] for lbl in counts if lbl in monitored), default=0)
            records.append((true in monitored, pred in monitored, votes, score))

    n_pos = sum(1 for r in records if r[0])
    n_neg = len(records) - n_pos
    points = []
    for v in range(1, k + 1):
        tp = sum(1 for pos, mon, votes, _ in records if pos and mon and votes >= v)
        fp = sum(1 for pos, mon, votes, _ in records if not pos and mon and votes >= v)
        points.append((fp / n_neg if n_neg else 0.0, tp / n_pos if n_pos else 0.0))
    points = sorted(set(points + [(0.0, 0.0), (1.0, 1.0)]))
    auc = float(np.trapezoid([p[1] for p in points], [p[0] for p in points]))
    scores = [(score, pos) for pos, _, _, score in records]
    return BinarizedRoc(points, auc, scores, monitored)


@dataclass
class ProcCurve:
    """Precision-recall curve with its random baseline."""

    points: list[tuple[float, float]]  # (recall, precision)
    auc: float
    random_baseline: float


def proc_curve(
    scores: Sequence[float],
    is_positive: Sequence[bool],
    max_score: int | None = None,
) -> ProcCurve:
    """Precision-recall curve over a descending score-threshold sweep.

    The random baseline is the positive fraction: no classifier can have
    lower precision. The area integrates precision over recall by
    trapezoid up to the largest reachable recall.
    """
    scores = np.asarray(scores, dtype=float)
    pos = np.asarray(is_positive, dtype=bool)
    if scores.shape != pos.shape:
        raise InvalidParams("scores and labels differ in length")
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise NoPositives("precision-recall needs at least one positive")
    baseline = n_pos / len(pos)
    top = int(max_score) if max_score is not None else int(scores.max()) if len(scores) else 1
    top = max(top, 1)
    points: list[tuple[float, float]] = []
    for v in range(top, 0, -1):
        predicted = scores >= v
        tp = int((predicted & pos).sum())
        n_pred = int(predicted.sum())
        recall = tp / n_pos
        precision = tp / n_pred if n_pred else 1.0
        points.append((recall, precision))
    if points[0][0] > 0:
        points.insert(0, (0.0, points[0][1]))
    auc = float(np.trapezoid([p[1] for p in points], [p[0] for p in points]))
    return ProcCurve(points, auc, baseline)


def open_world_eval(
    monitored: Corpus,
    background: Corpus,
    k: int = 4,
    world_sizes: Sequence[int] = (0,),
    seed: int = 0,
    vote_threshold: int | None = None,
    config: FeatureConfig = DEFAULT_FEATURES,
) -> list[EvalReport]:
    """Open-world attack: monitored pages vs one catch-all class.

    For each world size, that many background traces join the catch-all
    class (half train, half test). The attacker must name the exact
    monitored page; a rejected vote maps to the catch-all class. The
    default consensus threshold (all k votes) matches the stringent
    rule that keeps open-world false positives low.
    """
    threshold = k if vote_threshold is None else vote_threshold
    if not 1 <= threshold <= k:
        raise InvalidK(f"vote threshold {threshold} outside 1..{k}")
    sizes = list(world_sizes)
    if not sizes:
        raise InvalidParams("need at least one world size")
    if max(sizes) > len(background):
        raise InsufficientBackground(
            f"world size {max(sizes)} exceeds {len(background)} background traces"
        )
    mon_X, mon_y = features_matrix(monitored, config)
    bg_X, _ = features_matrix(background, config)
    rng = np.random.default_rng([seed, 3])

    mon_train_idx, mon_test_idx = [], []
    for label in sorted(set(mon_y)):
        idx = np.flatnonzero(mon_y == label)
        if len(idx) < 2:
            raise InsufficientInstances(f"label {label!r} needs >= 2 instances")
        rng.shuffle(idx)
        half = (len(idx) + 1) // 2
        mon_train_idx.extend(idx[:half])
        mon_test_idx.extend(idx[half:])
    mon_train_idx = np.asarray(sorted(mon_train_idx), dtype=int)
    mon_test_idx = np.asarray(sorted(mon_test_idx), dtype=int)
    bg_order = rng.permutation(len(bg_X))

    monitored_labels = frozenset(mon_y)
    reports = []
    for size in sizes:
        chosen = bg_order[:size]
        bg_train, bg_test = chosen[0::2], chosen[1::2]
        train_X = np.vstack([mon_X[mon_train_idx], bg_X[bg_train]]) if size else mon_X[mon_train_idx]
        train_y = np.concatenate(
            [mon_y[mon_train_idx], np.asarray([UNMONITORED] * len(bg_train), dtype=object)]
        ) if size else mon_y[mon_train_idx]
        test_X = np.vstack([mon_X[mon_test_idx], bg_X[bg_test]]) if len(bg_test) else mon_X[mon_test_idx]
        test_true = list(mon_y[mon_test_idx]) + [UNMONITORED] * len(bg_test)

        neighbors = _neighbor_labels(train_X, train_y, test_X, k)
        tp = fp = 0
        bg_flagged = 0
        correct = 0
        scores, positives = [], []
        for row, true in zip(neighbors, test_true):
            counts = Counter(row)
            pred, votes = _plurality(row)
            if votes < threshold or pred == UNMONITORED:
                pred = UNMONITORED
            scores.append(max((counts[l] for l in counts if l in monitored_labels), default=0))
            positives.append(true != UNMONITORED)
            correct += pred == true
            if pred != UNMONITORED:
                if pred == true:
                    tp += 1
                else:
                    fp += 1
                    if true == UNMONITORED:
                        bg_flagged += 1
        n_pos = len(mon_test_idx)
        tpr = tp / n_pos if n_pos else 0.0
        fpr = bg_flagged / len(bg_test) if len(bg_test) else 0.0
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        f1 = (
            2 * precision * tpr / (precision + tpr)
            if (precision + tpr) > 0
            else 0.0
        )
        proc = proc_curve(scores, positives, max_score=k)
        reports.append(
            EvalReport(
                accuracy=correct / len(test_true),
                tpr=tpr,
                fpr=fpr,
                precision=precision,
                f1=f1,
                auc=proc.auc,
                proc_points=proc.points,
                random_baseline=proc.random_baseline,
                world_size=size,
            )
        )
    return reports


def permute_labels(corpus: Corpus, seed: int = 0) -> Corpus:
    """Randomization control: reassign the labels by permutation."""
    rng = np.random.default_rng([seed, 4])
    labels = [t.label for t in corpus]
    perm = rng.permutation(len(labels))
    traces = tuple(
        Trace(t.events, labels[perm[i]]) for i, t in enumerate(corpus)
    )
    meta = dict(corpus.metadata)
    meta["labels"] = "permuted"
    return Corpus(traces, meta)

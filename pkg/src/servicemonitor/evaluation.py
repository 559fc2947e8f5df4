"""Stratified cross-validation, confusion metrics, ROC, and AUC.

Malicious is the positive class. Held-out scores from every fold are
pooled into a single ROC/AUC by default (a per-fold mean is available
behind a flag). The trapezoidal AUC is accumulated in exact integer
arithmetic over the cumulative counts, which makes it equal, float for
float, to the pairwise ranking statistic
P(score_mal > score_ben) + 0.5 * P(equal).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import MetricError, StratificationError, TrainingError
from .features import DatasetMatrix
from .forest import ForestParams, predict_scores, train_forest
from .pca import fit_pca, transform
from .rng import Xoshiro256StarStar, derive_seed
from .validation import as_label_indices


@dataclass
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class EvalReport:
    accuracy: float
    fpr: float
    fnr: float
    auc: float
    roc_points: list[tuple[float, float]]
    fold_count: int
    confusion: Confusion
    seed: int
    threshold: float = 0.5
    degenerate_metrics: list[str] = field(default_factory=list)
    per_fold_auc: list[float] | None = None

    def to_json(self) -> str:
        payload = {
            "accuracy": self.accuracy,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "auc": self.auc,
            "fold_count": self.fold_count,
            "threshold": self.threshold,
            "seed": self.seed,
            "confusion": {
                "tp": self.confusion.tp,
                "tn": self.confusion.tn,
                "fp": self.confusion.fp,
                "fn": self.confusion.fn,
            },
            "degenerate_metrics": self.degenerate_metrics,
            "roc_points": [[fpr, tpr] for fpr, tpr in self.roc_points],
        }
        if self.per_fold_auc is not None:
            payload["per_fold_auc"] = self.per_fold_auc
        return json.dumps(payload, sort_keys=True, indent=2)

    def to_table(self) -> str:
        c = self.confusion
        lines = [
            f"folds      {self.fold_count}",
            f"samples    {c.total}",
            f"accuracy   {self.accuracy:.4f}",
            f"fpr        {self.fpr:.4f}",
            f"fnr        {self.fnr:.4f}",
            f"auc        {self.auc:.4f}",
            f"confusion  tp={c.tp} tn={c.tn} fp={c.fp} fn={c.fn}",
        ]
        if self.degenerate_metrics:
            lines.append(f"degenerate {','.join(self.degenerate_metrics)} (0/0 reported as 0)")
        return "\n".join(lines)


def stratified_folds(labels, k: int, seed: int) -> list[np.ndarray]:
    """Partition indices into k folds preserving class proportions.

    Within each class the indices are shuffled by a seed-derived stream
    and dealt round-robin, so per-fold class counts differ from the
    exact proportion by at most one sample.
    """
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    y = list(labels)
    by_class: dict[object, list[int]] = {}
    for i, lbl in enumerate(y):
        by_class.setdefault(lbl, []).append(i)
    rng = Xoshiro256StarStar(derive_seed(seed, "folds", 0))
    folds: list[list[int]] = [[] for _ in range(k)]
    for lbl in sorted(by_class, key=str):
        members = by_class[lbl]
        if len(members) < k:
            raise StratificationError(
                f"class {lbl!r} has {len(members)} members, fewer than {k} folds"
            )
        rng.shuffle(members)
        for j, idx in enumerate(members):
            folds[j % k].append(idx)
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def roc_and_auc(scores, labels) -> tuple[list[tuple[float, float]], float]:
    """ROC sweep over unique scores descending, plus exact trapezoidal AUC."""
    s = np.asarray(scores, dtype=np.float64)
    y = as_label_indices(labels, count=len(s))
    positives = int(y.sum())
    negatives = len(y) - positives
    if positives == 0 or negatives == 0:
        raise MetricError("ROC requires both classes among the scored samples")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]

    points: list[tuple[float, float]] = [(0.0, 0.0)]
    tp = fp = 0
    area_twice = 0  # integer accumulation of sum((fp_i+1 - fp_i) * (tp_i+1 + tp_i))
    i = 0
    n = len(s_sorted)
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        group_tp = int(y_sorted[i:j].sum())
        group_fp = (j - i) - group_tp
        area_twice += group_fp * (2 * tp + group_tp)
        tp += group_tp
        fp += group_fp
        points.append((fp / negatives, tp / positives))
        i = j
    auc = area_twice / (2 * positives * negatives)
    return points, auc


def confusion_at(scores, labels, threshold: float) -> Confusion:
    """Counts at a vote-fraction threshold; malicious iff score > threshold."""
    s = np.asarray(scores, dtype=np.float64)
    y = as_label_indices(labels, count=len(s))
    predicted = s > threshold
    actual = y == 1
    return Confusion(
        tp=int(np.sum(predicted & actual)),
        tn=int(np.sum(~predicted & ~actual)),
        fp=int(np.sum(predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
    )


def _safe_rate(numerator: int, denominator: int, name: str, degenerate: list[str]) -> float:
    if denominator == 0:
        degenerate.append(name)
        return 0.0
    return numerator / denominator


def report_from_scores(
    scores,
    labels,
    threshold: float,
    fold_count: int,
    seed: int,
    per_fold_auc: list[float] | None = None,
) -> EvalReport:
    points, pooled_auc = roc_and_auc(scores, labels)
    confusion = confusion_at(scores, labels, threshold)
    degenerate: list[str] = []
    accuracy = _safe_rate(confusion.tp + confusion.tn, confusion.total, "accuracy", degenerate)
    fpr = _safe_rate(confusion.fp, confusion.fp + confusion.tn, "fpr", degenerate)
    fnr = _safe_rate(confusion.fn, confusion.fn + confusion.tp, "fnr", degenerate)
    auc = pooled_auc if per_fold_auc is None else float(np.mean(per_fold_auc))
    return EvalReport(
        accuracy=accuracy,
        fpr=fpr,
        fnr=fnr,
        auc=auc,
        roc_points=points,
        fold_count=fold_count,
        confusion=confusion,
        seed=seed,
        threshold=threshold,
        degenerate_metrics=degenerate,
        per_fold_auc=per_fold_auc,
    )


def cross_validate(
    dataset: DatasetMatrix,
    pca_k: int = 200,
    forest_params: ForestParams | None = None,
    k: int = 10,
    seed: int = 0,
    threshold: float = 0.5,
    pca_scope: str = "fold",
    auc_scope: str = "pooled",
) -> EvalReport:
    """Stratified k-fold evaluation of the PCA + forest pipeline.

    Per fold, PCA fits on the training rows only (pca_scope="global"
    fits once on everything, for comparison) and the forest trains on
    the reduced training rows; held-out scores are pooled. Rows are
    first sorted by app_id so the report is invariant to input order.
    """
    if pca_scope not in ("fold", "global"):
        raise ValueError(f"pca_scope must be 'fold' or 'global', got {pca_scope!r}")
    if auc_scope not in ("pooled", "fold-mean"):
        raise ValueError(f"auc_scope must be 'pooled' or 'fold-mean', got {auc_scope!r}")
    base = forest_params or ForestParams()
    if not dataset.rows:
        raise TrainingError("cannot cross-validate an empty dataset")

    rows = sorted(dataset.rows, key=lambda r: r.app_id)
    X = np.stack([r.values for r in rows])
    labels = [r.label for r in rows]
    y = as_label_indices(labels, count=len(rows))

    folds = stratified_folds(labels, k, seed)
    global_pca = fit_pca(X, pca_k) if pca_scope == "global" else None

    pooled_scores = np.zeros(len(rows))
    fold_aucs: list[float] = []
    for f, test_idx in enumerate(folds):
        train_mask = np.ones(len(rows), dtype=bool)
        train_mask[test_idx] = False
        train_idx = np.flatnonzero(train_mask)

        reducer = global_pca if global_pca is not None else fit_pca(X[train_idx], pca_k)
        z_train = transform(reducer, X[train_idx])
        z_test = transform(reducer, X[test_idx])

        params = ForestParams(
            tree_count=base.tree_count,
            mtry=base.mtry,
            min_leaf=base.min_leaf,
            seed=derive_seed(seed, "forest", f),
        )
        model = train_forest(z_train, y[train_idx], params)
        fold_scores = predict_scores(model, z_test)
        pooled_scores[test_idx] = fold_scores
        if auc_scope == "fold-mean":
            _, fold_auc = roc_and_auc(fold_scores, y[test_idx])
            fold_aucs.append(fold_auc)

    return report_from_scores(
        pooled_scores,
        labels,
        threshold=threshold,
        fold_count=k,
        seed=seed,
        per_fold_auc=fold_aucs if auc_scope == "fold-mean" else None,
    )


def roc_points_to_csv(points: list[tuple[float, float]]) -> str:
    lines = ["fpr,tpr"]
    lines.extend(f"{fpr!r},{tpr!r}" for fpr, tpr in points)
    return "\n".join(lines) + "\n"

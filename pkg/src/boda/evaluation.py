"""Accuracy breakdowns, feature-discrepancy analysis, and the
statistics-vs-accuracy correlation report."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import model
from .datagen import Dataset
from .errors import ValidationError


@dataclass
class AccuracyReport:
    per_domain: dict            # domain -> accuracy in [0, 100]
    average: float              # mean of per-domain accuracies
    worst: float                # min over domains
    many: Optional[float]       # shot-region accuracies; None if region empty
    medium: Optional[float]
    few: Optional[float]
    zero: Optional[float]
    per_pair: dict              # (domain, class) -> accuracy
    shot_region: dict           # (domain, class) -> region name


def shot_region(count: int, many_min: int = 100, few_max: int = 20) -> str:
    """Region of a pair by its training count.

    zero: no samples; few: under ``few_max``; medium: ``few_max`` to
    ``many_min`` inclusive; many: above ``many_min``.
    """
    if count == 0:
        return "zero"
    if count < few_max:
        return "few"
    if count <= many_min:
        return "medium"
    return "many"


def accuracy_report(params: model.ModelParams, ds: Dataset,
                    many_min: int = 100, few_max: int = 20) -> AccuracyReport:
    """Argmax-of-logits accuracy over the balanced test split."""
    if len(ds.test) == 0:
        raise ValidationError("test split is empty")
    _, logits, _ = model.forward(params, ds.test.x)
    correct = logits.argmax(axis=1) == ds.test.label

    per_pair, regions = {}, {}
    for d in range(ds.num_domains):
        for c in range(ds.num_classes):
            mask = (ds.test.domain == d) & (ds.test.label == c)
            if mask.any():
                per_pair[(d, c)] = float(correct[mask].mean() * 100.0)
            regions[(d, c)] = shot_region(ds.counts.get((d, c), 0),
                                          many_min, few_max)

    per_domain = {}
    for d in range(ds.num_domains):
        mask = ds.test.domain == d
        per_domain[d] = float(correct[mask].mean() * 100.0)

    region_acc = {}
    for name in ("many", "medium", "few", "zero"):
        vals = [per_pair[k] for k in per_pair if regions[k] == name]
        region_acc[name] = float(np.mean(vals)) if vals else None

    return AccuracyReport(
        per_domain=per_domain,
        average=float(np.mean(list(per_domain.values()))),
        worst=float(min(per_domain.values())),
        many=region_acc["many"],
        medium=region_acc["medium"],
        few=region_acc["few"],
        zero=region_acc["zero"],
        per_pair=per_pair,
        shot_region=regions,
    )


def feature_discrepancy(params: model.ModelParams, ds: Dataset):
    """Per-pair train/test centroid distances in representation space.

    ``within`` is the distance between a pair's train and test centroids;
    ``best_cross`` the smallest distance from its test centroid to another
    domain's train centroid of the same class. Also returns the Pearson
    correlation between log count ratios and log distance ratios over all
    ordered same-class cross-domain pairs.
    """
    z_train = model.forward(params, ds.train.x)[0] if len(ds.train) else None
    z_test, _, _ = model.forward(params, ds.test.x)

    def centroids(z, split):
        out = {}
        if z is None:
            return out
        for d in np.unique(split.domain):
            for c in np.unique(split.label[split.domain == d]):
                mask = (split.domain == d) & (split.label == c)
                out[(int(d), int(c))] = z[mask].mean(axis=0)
        return out

    mu_train = centroids(z_train, ds.train)
    mu_test = centroids(z_test, ds.test)

    per_pair = {}
    for key in sorted(mu_test):
        d, c = key
        within = (
            float(np.linalg.norm(mu_train[key] - mu_test[key]))
            if key in mu_train else None
        )
        cross = [
            float(np.linalg.norm(mu_train[(d2, c)] - mu_test[key]))
            for d2, c2 in mu_train
            if c2 == c and d2 != d
        ]
        per_pair[key] = {
            "within": within,
            "best_cross": min(cross) if cross else None,
            "count": ds.counts.get(key, 0),
        }

    xs, ys = [], []
    for (d, c) in mu_train:
        for (d2, c2) in mu_train:
            if c2 != c or d2 == d:
                continue
            within = per_pair.get((d, c), {}).get("within")
            other = float(np.linalg.norm(mu_train[(d2, c)] - mu_test[(d, c)])) \
                if (d, c) in mu_test else None
            if within is None or other is None or within <= 0 or other <= 0:
                continue
            xs.append(math.log(ds.counts[(d2, c)] / ds.counts[(d, c)]))
            ys.append(math.log(within / other))
    correlation = _pearson(np.array(xs), np.array(ys)) if len(xs) >= 2 else 0.0
    return per_pair, correlation


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    if x.size < 2 or x.std() == 0 or y.std() == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


def _rankdata(x: np.ndarray) -> np.ndarray:
    """Average ranks (ties share the mean of their positions)."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _spearman(x: np.ndarray, y: np.ndarray) -> float:
    return _pearson(_rankdata(x), _rankdata(y))


def stats_accuracy_correlation(records) -> dict:
    """Correlations of (beta + gamma) - alpha against test accuracy.

    Degenerate inputs (zero variance on either side) report 0 with a flag
    rather than failing, so sweeps over flat regions stay usable.
    """
    if len(records) < 3:
        raise ValidationError("need at least 3 records")

    def unpack(r):
        if hasattr(r, "score"):
            return float(r.score), float(r.accuracy)
        score, acc = r
        return float(score), float(acc)

    pairs = [unpack(r) for r in records]
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    degenerate = bool(x.std() == 0 or y.std() == 0)
    if degenerate:
        return {"pearson": 0.0, "spearman": 0.0, "degenerate": True}
    return {
        "pearson": _pearson(x, y),
        "spearman": _spearman(x, y),
        "degenerate": False,
    }


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def report_to_dict(report: AccuracyReport) -> dict:
    return {
        "per_domain": {str(d): v for d, v in report.per_domain.items()},
        "average": report.average,
        "worst": report.worst,
        "many": report.many,
        "medium": report.medium,
        "few": report.few,
        "zero": report.zero,
        "per_pair": [
            {
                "domain": d,
                "class": c,
                "accuracy": acc,
                "shot_region": report.shot_region[(d, c)],
            }
            for (d, c), acc in sorted(report.per_pair.items())
        ],
    }


def save_report_json(report: AccuracyReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
        fh.write("\n")


def save_per_pair_csv(report: AccuracyReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["domain", "class", "accuracy", "shot_region"])
        for (d, c), acc in sorted(report.per_pair.items()):
            writer.writerow([d, c, repr(acc), report.shot_region[(d, c)]])

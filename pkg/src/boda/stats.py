"""Per-pair feature statistics, the transferability graph, and its summaries.

The transferability from pair (d,c) to (d',c') is the average distance from
(d,c)'s features to (d',c')'s centroid; collecting all ordered pairs gives a
directed graph whose summary statistics (same class across domains, other
classes within a domain, other classes across domains) and their
count-calibrated variants feed both the alignment losses and the bound
checks. A classical-scaling projection of the symmetrized graph provides
the standard 2D picture.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .numerics import inverse_shrunk, sym_eig


@dataclass
class FeatureStats:
    """First/second-order feature statistics of one domain-class pair."""

    key: tuple            # (domain, class)
    mu: np.ndarray        # (h,)
    sigma: np.ndarray     # (h, h), population covariance
    count: int


class StatsStore:
    """Ordered map from (domain, class) to FeatureStats.

    Keys are kept domain-major, class-minor; pairs without samples are
    simply absent.
    """

    def __init__(self, stats=None):
        self._stats = {}
        for st in stats or []:
            self._stats[st.key] = st
        self._reorder()

    def _reorder(self):
        self._stats = {k: self._stats[k] for k in sorted(self._stats)}

    def __contains__(self, key):
        return tuple(key) in self._stats

    def __getitem__(self, key) -> FeatureStats:
        return self._stats[tuple(key)]

    def __len__(self):
        return len(self._stats)

    def keys(self):
        return list(self._stats.keys())

    def values(self):
        return list(self._stats.values())

    def domains(self):
        return sorted({k[0] for k in self._stats})

    def classes(self):
        return sorted({k[1] for k in self._stats})

    def mu_matrix(self) -> np.ndarray:
        return np.stack([st.mu for st in self._stats.values()])

    def count_vector(self) -> np.ndarray:
        return np.array([st.count for st in self._stats.values()], dtype=np.float64)


def group_by_pair(z, domains, labels) -> dict:
    """Group feature rows by (domain, class) key, preserving row order."""
    z = np.asarray(z, dtype=np.float64)
    domains = np.asarray(domains)
    labels = np.asarray(labels)
    groups = {}
    for d in np.unique(domains):
        for c in np.unique(labels[domains == d]):
            mask = (domains == d) & (labels == c)
            groups[(int(d), int(c))] = z[mask]
    return groups


def compute_stats(features_by_key: dict) -> StatsStore:
    """Mean, population covariance, and count for each sampled pair.

    Empty groups are omitted (a pair with no data has no statistics);
    non-finite features are rejected.
    """
    stats = []
    for key in sorted(features_by_key):
        z = np.asarray(features_by_key[key], dtype=np.float64)
        if z.size == 0:
            continue
        if z.ndim != 2:
            raise ValidationError("features must be 2-D per group")
        if not np.all(np.isfinite(z)):
            raise ValidationError(f"non-finite feature in group {key}")
        mu = z.mean(axis=0)
        centered = z - mu
        sigma = centered.T @ centered / z.shape[0]
        stats.append(FeatureStats(tuple(key), mu, sigma, z.shape[0]))
    return StatsStore(stats)


def momentum_update(prev: StatsStore, current: StatsStore, alpha_m: float) -> StatsStore:
    """Blend two stores: ``alpha_m * prev + (1 - alpha_m) * current``.

    Keys present only in ``current`` are inserted as-is; keys missing from
    ``current`` keep their previous statistics. Counts always come from the
    most recent store that has the key.
    """
    if not 0.0 <= alpha_m <= 1.0:
        raise ValidationError("alpha_m must be in [0, 1]")
    merged = []
    for key in sorted(set(prev.keys()) | set(current.keys())):
        if key not in prev:
            merged.append(current[key])
        elif key not in current:
            merged.append(prev[key])
        else:
            p, c = prev[key], current[key]
            merged.append(
                FeatureStats(
                    key,
                    alpha_m * p.mu + (1.0 - alpha_m) * c.mu,
                    alpha_m * p.sigma + (1.0 - alpha_m) * c.sigma,
                    c.count,
                )
            )
    return StatsStore(merged)


def transferability(src_samples, mu_dst, metric: str = "euclidean",
                    sigma_inv=None) -> float:
    """Mean distance from source samples to a destination centroid."""
    src = np.asarray(src_samples, dtype=np.float64)
    mu_dst = np.asarray(mu_dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[0] == 0:
        raise ValidationError("source sample set must be nonempty and 2-D")
    if src.shape[1] != mu_dst.shape[0]:
        raise ValidationError("feature dimension mismatch")
    diff = src - mu_dst
    if metric == "euclidean":
        d = np.sqrt(np.sum(diff * diff, axis=1))
    elif metric == "mahalanobis":
        if sigma_inv is None:
            raise ValidationError("mahalanobis metric needs sigma_inv")
        d = np.sqrt(np.maximum(np.einsum("nh,hk,nk->n", diff, sigma_inv, diff), 0.0))
    else:
        raise ValidationError(f"unknown metric {metric!r}")
    return float(d.mean())


@dataclass
class TransferabilityGraph:
    """Directed matrix of transferability values over sampled pairs."""

    keys: list            # ordered (domain, class) tuples, domain-major
    weights: np.ndarray   # (K, K); weights[i, j] = trans(key_i -> key_j)


def build_graph(store: StatsStore, features_by_key: dict,
                metric: str = "euclidean", eps_rel: float = 1e-3
                ) -> TransferabilityGraph:
    """Full directed transferability matrix over the sampled pairs."""
    keys = [tuple(k) for k in sorted(features_by_key)]
    for key in keys:
        if key not in store:
            raise ValidationError(f"no statistics for sampled pair {key}")
    k_count = len(keys)
    weights = np.zeros((k_count, k_count))
    sigma_invs = None
    if metric == "mahalanobis":
        sigma_invs = [inverse_shrunk(store[k].sigma, eps_rel) for k in keys]
    for i, ki in enumerate(keys):
        src = np.asarray(features_by_key[ki], dtype=np.float64)
        for j, kj in enumerate(keys):
            weights[i, j] = transferability(
                src, store[kj].mu, metric,
                sigma_invs[j] if sigma_invs is not None else None,
            )
    return TransferabilityGraph(keys, weights)


@dataclass
class CalibratedStats:
    nu: float
    alpha: float
    beta: float
    gamma: float


@dataclass
class TransferStats:
    alpha: float
    beta: float
    gamma: float
    calibrated: Optional[CalibratedStats] = None


def transfer_stats(graph: TransferabilityGraph, nu: Optional[float] = None,
                   counts=None) -> TransferStats:
    """Summarize the graph into its three ordered-pair averages.

    alpha averages same-class cross-domain edges, beta same-domain
    cross-class edges, gamma cross-domain cross-class edges; the diagonal is
    ignored. When ``nu`` is given, each edge is additionally weighted by
    ``(N_dst / N_src) ** nu`` to produce the calibrated variants.
    """
    keys = graph.keys
    domains = {k[0] for k in keys}
    classes = {k[1] for k in keys}
    if len(domains) < 2 or len(classes) < 2:
        raise ValidationError("need >= 2 domains and >= 2 classes with data")

    if nu is not None:
        if counts is None:
            counts = {}
        n = np.array(
            [float(counts.get(k, 0)) for k in keys], dtype=np.float64
        )
        if np.any(n < 1):
            raise ValidationError("calibration needs a positive count per pair")

    sums = {"alpha": [], "beta": [], "gamma": []}
    cal_sums = {"alpha": [], "beta": [], "gamma": []}
    for i, (d, c) in enumerate(keys):
        for j, (d2, c2) in enumerate(keys):
            if i == j:
                continue
            if c == c2 and d != d2:
                bucket = "alpha"
            elif d == d2:
                bucket = "beta"
            else:
                bucket = "gamma"
            w = graph.weights[i, j]
            sums[bucket].append(w)
            if nu is not None:
                cal_sums[bucket].append((n[j] / n[i]) ** nu * w)

    for name, vals in sums.items():
        if not vals:
            raise ValidationError(f"no ordered pairs contribute to {name}")
    plain = {name: float(np.mean(vals)) for name, vals in sums.items()}
    calibrated = None
    if nu is not None:
        calibrated = CalibratedStats(
            nu=float(nu),
            alpha=float(np.mean(cal_sums["alpha"])),
            beta=float(np.mean(cal_sums["beta"])),
            gamma=float(np.mean(cal_sums["gamma"])),
        )
    return TransferStats(plain["alpha"], plain["beta"], plain["gamma"], calibrated)


def mds_2d(graph: TransferabilityGraph):
    """Classical scaling of the symmetrized graph into two dimensions.

    Negative eigenvalues of the doubly-centered Gram matrix (possible for
    non-Euclidean dissimilarities) are clamped to zero.
    """
    k_count = len(graph.keys)
    if k_count < 2:
        raise ValidationError("need at least 2 pairs for a 2-D layout")
    d_sym = 0.5 * (graph.weights + graph.weights.T)
    center = np.eye(k_count) - np.ones((k_count, k_count)) / k_count
    gram = -0.5 * center @ (d_sym * d_sym) @ center
    evals, evecs = sym_eig(gram)
    lam = np.maximum(evals[:2], 0.0)
    coords = evecs[:, :2] * np.sqrt(lam)
    return graph.keys, coords


# ---------------------------------------------------------------------------
# File formats: graph JSON, MDS CSV, stats JSON
# ---------------------------------------------------------------------------

def save_graph(graph: TransferabilityGraph, path) -> None:
    payload = {
        "keys": [[int(d), int(c)] for d, c in graph.keys],
        "weights": [float(v) for v in graph.weights.ravel()],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_graph(path) -> TransferabilityGraph:
    with open(path) as fh:
        data = json.load(fh)
    keys = [(int(d), int(c)) for d, c in data["keys"]]
    k_count = len(keys)
    weights = np.array(data["weights"], dtype=np.float64).reshape(k_count, k_count)
    return TransferabilityGraph(keys, weights)


def save_mds_csv(keys, coords, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["domain", "class", "x", "y"])
        for (d, c), (x, y) in zip(keys, coords):
            writer.writerow([int(d), int(c), repr(float(x)), repr(float(y))])


def save_stats(store: StatsStore, path) -> None:
    payload = [
        {
            "domain": int(st.key[0]),
            "class": int(st.key[1]),
            "mu": [float(v) for v in st.mu],
            "sigma": [[float(v) for v in row] for row in st.sigma],
            "count": int(st.count),
        }
        for st in store.values()
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def transfer_stats_to_dict(ts: TransferStats) -> dict:
    out = {"alpha": ts.alpha, "beta": ts.beta, "gamma": ts.gamma}
    if ts.calibrated is not None:
        out["calibrated"] = {
            "nu": ts.calibrated.nu,
            "alpha": ts.calibrated.alpha,
            "beta": ts.calibrated.beta,
            "gamma": ts.calibrated.gamma,
        }
    return out

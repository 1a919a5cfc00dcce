"""Clustering (k-means + NMI) and nearest-neighbour (P@1) evaluation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import CorpusFormatError

log = logging.getLogger(__name__)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    history: list[float] = field(default_factory=list)  # inertia after each Lloyd iteration


@dataclass
class GroundTruth:
    cluster_labels: dict[str, str]
    neighbor_labels: dict[str, str]
    dropped_clusters: int = 0
    dropped_neighbors: int = 0

    @property
    def dropped(self) -> int:
        return self.dropped_clusters + self.dropped_neighbors


def l2_normalize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [int(rng.integers(n))]
    closest = _sq_dists(x, x[centers]).min(1)
    for _ in range(1, k):
        tot = closest.sum()
        if tot <= 0:
            # all remaining points coincide with a centre
            choice = int(rng.choice(np.setdiff1d(np.arange(n), centers)))
        else:
            choice = int(rng.choice(n, p=closest / tot))
        centers.append(choice)
        closest = np.minimum(closest, _sq_dists(x, x[[choice]])[:, 0])
    return x[centers].copy()


def _lloyd(x, centroids, max_iters, tol):
    history = []
    labels = None
    for it in range(1, max_iters + 1):
        d = _sq_dists(x, centroids)
        labels = d.argmin(1)
        new = centroids.copy()
        for j in range(len(centroids)):
            members = labels == j
            if members.any():
                new[j] = x[members].mean(0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(d[np.arange(len(x)), labels].argmax())
                new[j] = x[far]
        shift = np.sqrt(((new - centroids) ** 2).sum(1)).max()
        centroids = new
        labels = _sq_dists(x, centroids).argmin(1)
        history.append(float(_sq_dists(x, centroids)[np.arange(len(x)), labels].sum()))
        if shift < tol:
            break
    return labels, centroids, history, it


def kmeans(vectors: np.ndarray, k: int, restarts: int = 10, max_iters: int = 100, seed: int = 0,
           normalize: bool = True, tol: float = 1e-6) -> KMeansResult:
    """Best-of-``restarts`` Lloyd's k-means with k-means++ seeding."""
    x = l2_normalize(vectors) if normalize else np.asarray(vectors, dtype=np.float64)
    if not 1 <= k <= len(x):
        raise ValueError(f"k={k} must lie in [1, {len(x)}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        labels, centroids, history, n_iter = _lloyd(x, _kmeanspp(x, k, rng), max_iters, tol)
        inertia = history[-1]
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, centroids, inertia, n_iter, history)
    return best


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def contingency(pred: Sequence, truth: Sequence) -> np.ndarray:
    _, pi = np.unique(np.asarray(pred), return_inverse=True)
    _, ti = np.unique(np.asarray(truth), return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1))
    np.add.at(table, (pi, ti), 1)
    return table


def nmi(pred: Sequence, truth: Sequence) -> float:
    """Mutual information normalised by the geometric mean of the entropies."""
    if len(pred) != len(truth):
        raise ValueError("pred and truth must label the same items")
    if len(pred) == 0:
        raise ValueError("nothing to compare")
    table = contingency(pred, truth)
    n = table.sum()
    hp = _entropy(table.sum(1))
    ht = _entropy(table.sum(0))
    if hp == 0 and ht == 0:
        return 1.0
    if hp == 0 or ht == 0:
        return 0.0
    pij = table / n
    outer = np.outer(table.sum(1), table.sum(0)) / n**2
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    return min(max(mi / np.sqrt(hp * ht), 0.0), 1.0)


def nearest_neighbors(vectors: np.ndarray) -> np.ndarray:
    """Index of each row's most cosine-similar other row (ties -> lower index)."""
    x = l2_normalize(vectors)
    sims = x @ x.T
    np.fill_diagonal(sims, -np.inf)
    return sims.argmax(1)


def nns_p_at_1(vectors: np.ndarray, labels: Sequence) -> tuple[float, int]:
    """Precision@1 of nearest-neighbour search over labelled rows.

    Only rows whose label is shared by at least one other row are scored,
    but every labelled row is a candidate neighbour. Returns the precision
    and the number of scored rows.
    """
    labels = np.asarray(labels)
    if len(labels) < 2:
        raise ValueError("need at least two labelled codes")
    _, inv, counts = np.unique(labels, return_inverse=True, return_counts=True)
    eligible = counts[inv] >= 2
    if not eligible.any():
        raise ValueError("no subcategory has two or more codes")
    nn = nearest_neighbors(vectors)
    hits = labels[nn] == labels
    return float(hits[eligible].mean()), int(eligible.sum())


def _read_labels(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise CorpusFormatError("expected code<TAB>label", lineno)
            code, label = parts
            if code in out and out[code] != label:
                raise CorpusFormatError(f"conflicting labels for {code!r}", lineno)
            out[code] = label
    return out


def load_ground_truth(cluster_file, neighbor_file, vocab) -> GroundTruth:
    """Read label files and keep only codes present in ``vocab``.

    ``vocab`` is anything supporting ``in`` over code strings.
    """
    clusters = _read_labels(cluster_file) if cluster_file else {}
    neighbors = _read_labels(neighbor_file) if neighbor_file else {}
    kept_c = {c: lab for c, lab in clusters.items() if c in vocab}
    kept_n = {c: lab for c, lab in neighbors.items() if c in vocab}
    gt = GroundTruth(kept_c, kept_n, len(clusters) - len(kept_c), len(neighbors) - len(kept_n))
    if gt.dropped:
        log.warning("dropped %d labelled codes absent from the vocabulary", gt.dropped)
    return gt


def evaluate(codes: Sequence[str], vectors: np.ndarray, truth: GroundTruth, k: int | None = None,
             restarts: int = 10, max_iters: int = 100, seed: int = 0) -> dict:
    """NMI of k-means clusters and P@1, keyed as in the metrics JSON."""
    index = {c: i for i, c in enumerate(codes)}
    out: dict = {"dropped": truth.dropped}
    cl = [c for c in codes if c in truth.cluster_labels]
    if cl:
        y = [truth.cluster_labels[c] for c in cl]
        kk = k or len(set(y))
        res = kmeans(vectors[[index[c] for c in cl]], kk, restarts, max_iters, seed)
        out["nmi"] = nmi(res.labels, y)
        out["n_clustered"] = len(cl)
    else:
        out["nmi"], out["n_clustered"] = None, 0
    nb = [c for c in codes if c in truth.neighbor_labels]
    if len(nb) >= 2:
        try:
            out["p_at_1"], out["n_nns_eligible"] = nns_p_at_1(
                vectors[[index[c] for c in nb]], [truth.neighbor_labels[c] for c in nb])
        except ValueError:
            out["p_at_1"], out["n_nns_eligible"] = None, 0
    else:
        out["p_at_1"], out["n_nns_eligible"] = None, 0
    if out["nmi"] is None and out["p_at_1"] is None:
        raise ValueError("no labelled codes overlap the embeddings")
    return out


def write_metrics(path: str | Path, metrics: Mapping) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dict(metrics), fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Negative sampling from the unigram distribution raised to the 3/4 power.

Draws use Vose's alias method: one uniform bucket pick plus one biased coin,
so every draw is O(1) and the sampled distribution is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POWER = 0.75


@dataclass(frozen=True)
class NegSampler:
    prob: np.ndarray  # acceptance probability of each alias bucket
    alias: np.ndarray  # fallback code id of each bucket
    probabilities: np.ndarray  # exact target distribution
    norm: float  # sum_j counts[j] ** 0.75

    def __len__(self) -> int:
        return len(self.prob)

    def implied_probabilities(self) -> np.ndarray:
        """Distribution encoded by the alias tables (for checking construction)."""
        n = len(self.prob)
        p = self.prob / n
        np.add.at(p, self.alias, (1.0 - self.prob) / n)
        return p


def alias_tables(weights) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ValueError("weights must be finite, non-negative and not all zero")
    n = len(w)
    scaled = w * (n / w.sum())
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] -= 1.0 - scaled[s]
        (small if scaled[g] < 1.0 else large).append(g)
    # leftovers are 1 up to rounding
    return prob, alias


def build_sampler(vocab_or_counts) -> NegSampler:
    counts = getattr(vocab_or_counts, "counts", vocab_or_counts)
    counts = np.asarray(counts, dtype=np.float64)
    if len(counts) == 0:
        raise ValueError("cannot sample from an empty vocabulary")
    weights = counts**POWER
    norm = float(weights.sum())
    prob, alias = alias_tables(weights)
    return NegSampler(prob, alias, weights / norm, norm)


def draw_many(sampler: NegSampler, rng: np.random.Generator, size: int) -> np.ndarray:
    n = len(sampler.prob)
    idx = rng.integers(0, n, size=size)
    coin = rng.random(size)
    return np.where(coin < sampler.prob[idx], idx, sampler.alias[idx])


def draw(sampler: NegSampler, rng: np.random.Generator, exclude: int | None = None) -> int:
    """One code id; with ``exclude`` set, redraw until it differs."""
    n = len(sampler.prob)
    if exclude is not None and n < 2:
        raise ValueError("cannot exclude the only code in the vocabulary")
    while True:
        i = int(rng.integers(n))
        c = i if rng.random() < sampler.prob[i] else int(sampler.alias[i])
        if c != exclude:
            return c

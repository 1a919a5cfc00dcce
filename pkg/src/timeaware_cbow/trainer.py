"""Epoch loop: temporal context assembly, learning-rate decay and workers.

Multi-worker training is lock-free: worker threads run the compiled epoch
kernel without the GIL over disjoint entity partitions and write into the
same parameter arrays. Only single-worker runs are bit-reproducible.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .corpus import BucketedSequence, PatientRecord, Vocabulary, bucketize, keep_probabilities
from .model import ContextSet, ModelParams, init_params
from .negsample import build_sampler

log = logging.getLogger(__name__)

LR_FLOOR = _kernels.LR_FLOOR

# epoch counts used for the small hospital corpus and the large claims corpus
PRESETS = {
    "small": {"epochs": 30},
    "large": {"epochs": 5},
}


@dataclass
class TrainConfig:
    dim: int = 100
    scope: int = 20  # S, in time units
    gamma: int = 60  # max contexts per target
    negative: int = 5
    alpha: float = 0.025
    epochs: int = 5
    min_count: int = 5
    sample_threshold: float = 1e-4  # 0 disables subsampling
    time_unit_days: int = 7
    workers: int = 1
    seed: int = 1
    mode: str = "mce"
    freeze_attention: bool = False
    shuffle: bool = False
    precision: str = "float32"

    def __post_init__(self):
        if self.gamma < 1 or self.scope < 0 or self.negative < 1 or self.alpha <= 0 or self.epochs < 1:
            raise ValueError("invalid TrainConfig: need gamma>=1, scope>=0, negative>=1, alpha>0, epochs>=1")
        if self.dim < 1 or self.workers < 1 or self.time_unit_days < 1 or self.min_count < 1:
            raise ValueError("invalid TrainConfig: dim, workers, time_unit_days, min_count must be >= 1")
        if self.mode not in ("mce", "cbow"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.sample_threshold < 0:
            raise ValueError("sample_threshold must be >= 0")

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64


@dataclass
class TrainReport:
    targets: int  # eligible targets per epoch
    epochs: int
    final_lr: float
    mean_loss_per_epoch: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0
    steps_per_epoch: list[int] = field(default_factory=list)
    attention_ops_per_epoch: list[int] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


@dataclass
class CorpusArrays:
    codes: np.ndarray
    bucket_index: np.ndarray
    bucket_start: np.ndarray
    entity_bstart: np.ndarray
    entity_ids: list[str]

    @property
    def n_entities(self) -> int:
        return len(self.entity_ids)

    @classmethod
    def from_sequences(cls, seqs: Sequence[BucketedSequence]) -> "CorpusArrays":
        codes, bidx, bstart, estart = [], [], [0], [0]
        for seq in seqs:
            for idx, cs in seq.buckets:
                bidx.append(idx)
                codes.extend(cs)
                bstart.append(len(codes))
            estart.append(len(bidx))
        return cls(
            np.asarray(codes, dtype=np.int64),
            np.asarray(bidx, dtype=np.int64),
            np.asarray(bstart, dtype=np.int64),
            np.asarray(estart, dtype=np.int64),
            [s.entity_id for s in seqs],
        )

    @classmethod
    def from_records(cls, records: Sequence[PatientRecord], time_unit_days: int) -> "CorpusArrays":
        return cls.from_sequences([bucketize(r, time_unit_days) for r in records if r.events])

    def event_counts(self) -> np.ndarray:
        return np.diff(self.bucket_start[self.entity_bstart])


def assemble_contexts(seq: BucketedSequence, bucket_pos: int, code_pos: int, scope: int, gamma: int) -> ContextSet:
    """Temporal context of the ``code_pos``-th code in the ``bucket_pos``-th bucket.

    Every occurrence within ``scope`` time units except the target itself,
    truncated to ``gamma`` entries by nearest offset first, past before
    future, record order within a bucket. May be empty.
    """
    arr = CorpusArrays.from_sequences([seq])
    occ = int(arr.bucket_start[bucket_pos]) + code_pos
    if not 0 <= code_pos < len(seq.buckets[bucket_pos][1]):
        raise IndexError("code_pos out of range")
    kept = np.ones(len(arr.codes), dtype=np.bool_)
    ctx_codes = np.empty(gamma, dtype=np.int64)
    ctx_slots = np.empty(gamma, dtype=np.int64)
    n = _kernels.assemble(arr.codes, kept, 0, arr.bucket_index, arr.bucket_start, 0, len(seq.buckets),
                          bucket_pos, occ, scope, gamma, ctx_codes, ctx_slots)
    entries = [(int(c), int(s) - scope) for c, s in zip(ctx_codes[:n], ctx_slots[:n])]
    return ContextSet(int(arr.codes[occ]), entries)


def lr_schedule(processed: int, total: int, alpha0: float) -> float:
    if not 0 <= processed <= total or total <= 0:
        raise ValueError("need 0 <= processed <= total and total > 0")
    return alpha0 * max(1.0 - processed / total, LR_FLOOR)


def _partition(arr: CorpusArrays, workers: int) -> list[np.ndarray]:
    """Split entities into contiguous chunks of roughly equal event count."""
    if workers == 1:
        return [np.arange(arr.n_entities, dtype=np.int64)]
    cum = np.cumsum(arr.event_counts())
    bounds = np.searchsorted(cum, np.linspace(0, cum[-1], workers + 1)[1:-1], side="right")
    return [p.astype(np.int64) for p in np.split(np.arange(arr.n_entities), bounds)]


class Trainer:
    """Holds the flattened corpus and sampler so epochs can be re-run cheaply."""

    def __init__(self, records: Sequence[PatientRecord], vocab: Vocabulary, config: TrainConfig):
        if len(vocab) < 2:
            raise ValueError("need at least two codes to draw negatives")
        self.config = config
        self.vocab = vocab
        self.arrays = CorpusArrays.from_records(records, config.time_unit_days)
        if self.arrays.n_entities == 0:
            raise ValueError("empty corpus")
        self.sampler = build_sampler(vocab)
        if config.sample_threshold > 0:
            self.keep_prob = keep_probabilities(vocab, config.sample_threshold)
        else:
            self.keep_prob = np.ones(len(vocab))
        a = self.arrays
        self.targets = int(_kernels.count_eligible(a.bucket_index, a.bucket_start, a.entity_bstart, config.scope))
        if self.targets == 0:
            raise ValueError("corpus has no target with a non-empty context")
        self.partitions = _partition(a, config.workers)

    def _states(self) -> list[np.ndarray]:
        seqs = np.random.SeedSequence([self.config.seed, 0x5EED]).spawn(self.config.workers)
        return [s.generate_state(1, dtype=np.uint64) for s in seqs]

    def fit(self, params: ModelParams | None = None) -> tuple[ModelParams, TrainReport]:
        cfg = self.config
        a = self.arrays
        if params is None:
            params = init_params(len(self.vocab), cfg.dim, cfg.scope, cfg.seed, cfg.dtype)
        mode = _kernels.MODE_MCE if cfg.mode == "mce" else _kernels.MODE_CBOW
        update_attn = not cfg.freeze_attention
        total = cfg.epochs * self.targets
        progress = np.zeros(cfg.workers, dtype=np.int64)
        states = self._states()
        shuffle_rng = np.random.default_rng([cfg.seed, 0x5F1E])
        report = TrainReport(targets=self.targets, epochs=cfg.epochs, final_lr=cfg.alpha)
        t0 = time.perf_counter()
        for epoch in range(cfg.epochs):
            parts = self.partitions
            if cfg.shuffle:
                order = shuffle_rng.permutation(a.n_entities)
                parts = [order[p] for p in self.partitions]
            stats = [np.zeros(4) for _ in parts]

            def work(w):
                _kernels.run_epoch(
                    params.v, params.vout, params.m, params.b, a.codes, a.bucket_index, a.bucket_start,
                    a.entity_bstart, parts[w], self.keep_prob, self.sampler.prob, self.sampler.alias,
                    cfg.scope, cfg.gamma, cfg.negative, cfg.alpha, total, progress, w, states[w],
                    mode, update_attn, stats[w],
                )

            if cfg.workers == 1:
                work(0)
            else:
                threads = [threading.Thread(target=work, args=(w,)) for w in range(cfg.workers)]
                for th in threads:
                    th.start()
                for th in threads:
                    th.join()
            loss = sum(s[0] for s in stats)
            steps = int(sum(s[1] for s in stats))
            report.mean_loss_per_epoch.append(loss / steps if steps else float("nan"))
            report.steps_per_epoch.append(steps)
            report.attention_ops_per_epoch.append(int(sum(s[2] for s in stats)))
            report.final_lr = lr_schedule(min(int(progress.sum()), total), total, cfg.alpha)
            log.info("epoch %d/%d: mean loss %.4f over %d steps", epoch + 1, cfg.epochs,
                     report.mean_loss_per_epoch[-1], steps)
        report.wall_seconds = time.perf_counter() - t0
        if not params.all_finite():
            raise FloatingPointError("non-finite parameters after training")
        return params, report


def train(records: Sequence[PatientRecord], vocab: Vocabulary, config: TrainConfig,
          params: ModelParams | None = None) -> tuple[ModelParams, TrainReport]:
    """Train embeddings and attention on dense-id records from :func:`build_vocab`."""
    return Trainer(records, vocab, config).fit(params)


def count_attention_ops(config: TrainConfig, records: Sequence[PatientRecord], vocab: Vocabulary) -> int:
    """Attention-score fetches performed during one epoch of MCE training."""
    cfg = TrainConfig(**{**asdict(config), "epochs": 1, "mode": "mce"})
    _, report = train(records, vocab, cfg)
    return report.attention_ops_per_epoch[0]

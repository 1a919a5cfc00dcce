"""Parameters, attention, loss and SGD steps for the time-aware CBOW model.

Each code owns an input vector (row of ``v``), an output vector (row of
``vout``) and a row of attention scores ``m`` over the ``2S + 1`` relative
time offsets. ``b`` is a per-offset bias shared by all codes. Offset
``delta`` lives in slot ``delta + S``.

The forward pass here is plain numpy and serves as the readable reference;
:func:`train_step` delegates to the compiled step used by the trainer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .corpus import CorpusFormatError

LOGIT_CLAMP = _kernels.LOGIT_CLAMP


@dataclass
class ModelParams:
    v: np.ndarray
    vout: np.ndarray
    m: np.ndarray
    b: np.ndarray
    scope: int

    @property
    def dim(self) -> int:
        return self.v.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.v.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.v.copy(), self.vout.copy(), self.m.copy(), self.b.copy(), self.scope)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(*(x.astype(dtype) for x in (self.v, self.vout, self.m, self.b)), self.scope)

    def all_finite(self) -> bool:
        return all(np.isfinite(x).all() for x in (self.v, self.vout, self.m, self.b))

    def save(self, path: str | Path) -> None:
        np.savez(path, v=self.v, vout=self.vout, m=self.m, b=self.b, scope=np.int64(self.scope))

    @classmethod
    def load(cls, path: str | Path) -> "ModelParams":
        with np.load(path) as z:
            return cls(z["v"], z["vout"], z["m"], z["b"], int(z["scope"]))


@dataclass
class ContextSet:
    target: int
    entries: list[tuple[int, int]]  # (code_id, delta)

    def __len__(self) -> int:
        return len(self.entries)

    def arrays(self, scope: int) -> tuple[np.ndarray, np.ndarray]:
        codes = np.array([c for c, _ in self.entries], dtype=np.int64)
        slots = np.array([dl + scope for _, dl in self.entries], dtype=np.int64)
        return codes, slots


@dataclass
class AttentionProfile:
    code_id: int
    weights: np.ndarray  # over deltas -S..S


def init_params(vocab_size: int, dim: int, scope: int, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Uniform(-0.5/d, 0.5/d) input vectors; zero output vectors and attention."""
    if vocab_size < 1 or dim < 1 or scope < 0:
        raise ValueError("need vocab_size >= 1, dim >= 1, scope >= 0")
    rng = np.random.default_rng(seed)
    v = rng.uniform(-0.5 / dim, 0.5 / dim, size=(vocab_size, dim)).astype(dtype)
    width = 2 * scope + 1
    return ModelParams(
        v=v,
        vout=np.zeros((vocab_size, dim), dtype=dtype),
        m=np.zeros((vocab_size, width), dtype=dtype),
        b=np.zeros(width, dtype=dtype),
        scope=scope,
    )


def _check_context(params: ModelParams, ctx: ContextSet) -> None:
    if not ctx.entries:
        raise ValueError("empty context set")
    for _, delta in ctx.entries:
        if abs(delta) > params.scope:
            raise ValueError(f"offset {delta} outside scope {params.scope}")


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = np.exp(scores - scores.max())
    return z / z.sum()


def attention_weights(params: ModelParams, ctx: ContextSet) -> np.ndarray:
    """Softmax over context occurrences of ``m[target, slot] + b[slot]``."""
    _check_context(params, ctx)
    _, slots = ctx.arrays(params.scope)
    scores = params.m[ctx.target, slots].astype(np.float64) + params.b[slots]
    return _softmax(scores)


def hidden(params: ModelParams, ctx: ContextSet, weights: np.ndarray) -> np.ndarray:
    codes, _ = ctx.arrays(params.scope)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(codes),):
        raise ValueError("one weight per context entry required")
    return weights @ params.v[codes].astype(np.float64)


def _log_sigmoid(x):
    x = np.clip(x, -LOGIT_CLAMP, LOGIT_CLAMP)
    return -np.log1p(np.exp(-x))


def forward_loss(params: ModelParams, ctx: ContextSet, negatives: Sequence[int], uniform: bool = False) -> float:
    """Negative-sampling loss of one target/context pair.

    ``uniform=True`` gives the CBOW baseline (plain average of the context).
    """
    if len(negatives) == 0:
        raise ValueError("at least one negative sample required")
    if ctx.target in negatives:
        raise ValueError("negatives must differ from the target")
    if uniform:
        _check_context(params, ctx)
        weights = np.full(len(ctx), 1.0 / len(ctx))
    else:
        weights = attention_weights(params, ctx)
    h = hidden(params, ctx, weights)
    vout = params.vout.astype(np.float64)
    pos = vout[ctx.target] @ h
    neg = vout[np.asarray(negatives)] @ h
    return float(-_log_sigmoid(pos) - _log_sigmoid(-neg).sum())


def _step(params, ctx, negatives, lr, mode, update_attn):
    if lr < 0:
        raise ValueError("lr must be non-negative")
    _check_context(params, ctx)
    negs = np.asarray(negatives, dtype=np.int64)
    if len(negs) == 0:
        raise ValueError("at least one negative sample required")
    if np.any(negs == ctx.target):
        raise ValueError("negatives must differ from the target")
    codes, slots = ctx.arrays(params.scope)
    n, d = len(codes), params.dim
    return _kernels.sgd_step(
        params.v, params.vout, params.m, params.b, ctx.target, codes, slots, n, negs, len(negs),
        float(lr), mode, update_attn,
        np.empty(n), np.empty(n), np.empty(d), np.empty(d), np.empty(len(negs) + 1),
    )


def train_step(params: ModelParams, ctx: ContextSet, negatives: Sequence[int], lr: float,
               freeze_attention: bool = False) -> float:
    """One in-place SGD step on v, v', m and b. Returns the pre-step loss."""
    return _step(params, ctx, negatives, lr, _kernels.MODE_MCE, not freeze_attention)


def cbow_train_step(params: ModelParams, ctx: ContextSet, negatives: Sequence[int], lr: float) -> float:
    """Baseline step: context averaged uniformly, m and b untouched."""
    return _step(params, ctx, negatives, lr, _kernels.MODE_CBOW, False)


def gradients(params: ModelParams, ctx: ContextSet, negatives: Sequence[int], uniform: bool = False) -> dict:
    """Analytic gradient of the loss, recovered from a unit step on a float64 copy."""
    before = params.astype(np.float64)
    after = before.copy()
    if uniform:
        cbow_train_step(after, ctx, negatives, 1.0)
    else:
        train_step(after, ctx, negatives, 1.0)
    return {name: getattr(before, name) - getattr(after, name) for name in ("v", "vout", "m", "b")}


def profile_weights(params: ModelParams) -> np.ndarray:
    """Per-code softmax over the 2S+1 offset slots, shape (|C|, 2S+1)."""
    scores = params.m.astype(np.float64) + params.b.astype(np.float64)
    scores -= scores.max(axis=1, keepdims=True)
    z = np.exp(scores)
    return z / z.sum(axis=1, keepdims=True)


def export_profiles(params: ModelParams, vocab=None) -> list[AttentionProfile]:
    w = profile_weights(params)
    return [AttentionProfile(i, w[i]) for i in range(w.shape[0])]


def save_profiles_csv(path: str | Path, params: ModelParams, vocab) -> None:
    s = params.scope
    w = profile_weights(params)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["code"] + [f"delta_{k}" for k in range(-s, s + 1)])
        for code, row in zip(vocab.codes, w):
            writer.writerow([code] + [f"{x:.8g}" for x in row])


def load_profiles_csv(path: str | Path) -> tuple[list[str], np.ndarray, list[int]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    deltas = [int(col[len("delta_"):]) for col in header[1:]]
    codes = [r[0] for r in body]
    return codes, np.array([[float(x) for x in r[1:]] for r in body]), deltas


def save_embeddings(path: str | Path, vectors: np.ndarray, codes: Sequence[str]) -> None:
    n, d = vectors.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {d}\n")
        for code, row in zip(codes, vectors):
            fh.write(code + " " + " ".join(f"{x:.8g}" for x in row) + "\n")


def load_embeddings(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise CorpusFormatError("embedding header must be '<count> <dim>'", 1)
        n, d = int(header[0]), int(header[1])
        codes, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != d + 1:
                raise CorpusFormatError(f"expected {d} values", lineno)
            codes.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(codes) != n:
        raise CorpusFormatError(f"header says {n} vectors, found {len(codes)}", 1)
    return codes, np.array(rows, dtype=np.float64).reshape(n, d)

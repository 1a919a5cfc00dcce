"""Compiled inner loops: RNG, alias draws, context assembly and the SGD step.

Everything here works on flat arrays so it can run without the GIL. The
public, object-level API lives in :mod:`model` and :mod:`trainer`.

Flat corpus layout (see ``trainer.CorpusArrays``):
  codes[bucket_start[p]:bucket_start[p + 1]]    codes of bucket p
  bucket_index[p]                               absolute time unit of bucket p
  entity_bstart[e]:entity_bstart[e + 1]         buckets of entity e
"""

import math

import numpy as np
from numba import njit

MODE_MCE = 0
MODE_CBOW = 1

LOGIT_CLAMP = 30.0
LR_FLOOR = 1e-4

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def next_u64(state):
    # splitmix64
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def next_uniform(state):
    return (next_u64(state) >> _S11) * _INV53


@njit(cache=True, nogil=True)
def alias_draw(alias_prob, alias_idx, state):
    n = alias_prob.shape[0]
    i = int(next_uniform(state) * n)
    if i >= n:
        i = n - 1
    if next_uniform(state) < alias_prob[i]:
        return i
    return alias_idx[i]


@njit(cache=True, nogil=True)
def _clamp(x):
    if x > LOGIT_CLAMP:
        return LOGIT_CLAMP
    if x < -LOGIT_CLAMP:
        return -LOGIT_CLAMP
    return x


@njit(cache=True, nogil=True)
def sgd_step(v, vout, m, b, target, ctx_codes, ctx_slots, n_ctx, negs, n_neg, lr, mode, update_attn,
             a, e, h, g, gs):
    """One negative-sampling SGD step; returns the loss before the update.

    ``a``, ``e`` (length >= n_ctx), ``h``, ``g`` (length d) and ``gs``
    (length >= n_neg + 1) are float64 scratch buffers. ``a`` holds the
    attention weights on return.
    """
    d = v.shape[1]
    if mode == MODE_MCE:
        mx = -np.inf
        for j in range(n_ctx):
            s = m[target, ctx_slots[j]] + b[ctx_slots[j]]
            a[j] = s
            if s > mx:
                mx = s
        tot = 0.0
        for j in range(n_ctx):
            a[j] = math.exp(a[j] - mx)
            tot += a[j]
        for j in range(n_ctx):
            a[j] = a[j] / tot
    else:
        for j in range(n_ctx):
            a[j] = 1.0 / n_ctx

    for k in range(d):
        h[k] = 0.0
        g[k] = 0.0
    for j in range(n_ctx):
        c = ctx_codes[j]
        w = a[j]
        for k in range(d):
            h[k] += w * v[c, k]

    # all output scores use pre-update v' so repeated negatives get the exact gradient
    loss = 0.0
    for o in range(n_neg + 1):
        c = target if o == 0 else negs[o - 1]
        f = 0.0
        for k in range(d):
            f += vout[c, k] * h[k]
        f = _clamp(f)
        if o == 0:
            loss += math.log1p(math.exp(-f))
            gs[o] = 1.0 / (1.0 + math.exp(-f)) - 1.0
        else:
            loss += math.log1p(math.exp(f))
            gs[o] = 1.0 / (1.0 + math.exp(-f))
        for k in range(d):
            g[k] += gs[o] * vout[c, k]
    for o in range(n_neg + 1):
        c = target if o == 0 else negs[o - 1]
        step = lr * gs[o]
        for k in range(d):
            vout[c, k] -= step * h[k]

    if mode == MODE_MCE and update_attn:
        ebar = 0.0
        for j in range(n_ctx):
            c = ctx_codes[j]
            s = 0.0
            for k in range(d):
                s += g[k] * v[c, k]
            e[j] = s
            ebar += a[j] * s
        for j in range(n_ctx):
            ds = lr * a[j] * (e[j] - ebar)
            m[target, ctx_slots[j]] -= ds
            b[ctx_slots[j]] -= ds

    for j in range(n_ctx):
        c = ctx_codes[j]
        w = lr * a[j]
        for k in range(d):
            v[c, k] -= w * g[k]
    return loss


@njit(cache=True, nogil=True)
def _add_bucket(codes, kept, base, lo, hi, skip, slot, ctx_codes, ctx_slots, n, gamma):
    for q in range(lo, hi):
        if n >= gamma:
            break
        if q != skip and kept[q - base]:
            ctx_codes[n] = codes[q]
            ctx_slots[n] = slot
            n += 1
    return n


@njit(cache=True, nogil=True)
def assemble(codes, kept, base, bucket_index, bucket_start, first, last, p, occ, scope, gamma,
             ctx_codes, ctx_slots):
    """Fill the context of occurrence ``occ`` in bucket ``p``; returns its size.

    Buckets ``first..last-1`` belong to the entity and ``kept[q - base]``
    flags surviving occurrences. Priority: own bucket (target excluded), then
    offsets -1, +1, -2, +2, ... up to ``scope``; record order within a
    bucket. Stops at ``gamma`` entries.
    """
    t = bucket_index[p]
    n = _add_bucket(codes, kept, base, bucket_start[p], bucket_start[p + 1], occ, scope,
                    ctx_codes, ctx_slots, 0, gamma)
    lp = p - 1
    rp = p + 1
    for dist in range(1, scope + 1):
        if n >= gamma:
            break
        if lp >= first and bucket_index[lp] == t - dist:
            n = _add_bucket(codes, kept, base, bucket_start[lp], bucket_start[lp + 1], -1,
                            scope - dist, ctx_codes, ctx_slots, n, gamma)
            lp -= 1
        if rp < last and bucket_index[rp] == t + dist:
            n = _add_bucket(codes, kept, base, bucket_start[rp], bucket_start[rp + 1], -1,
                            scope + dist, ctx_codes, ctx_slots, n, gamma)
            rp += 1
        if lp < first and rp >= last:
            break
    return n


@njit(cache=True, nogil=True)
def is_eligible(bucket_index, bucket_start, first, last, p, scope):
    if bucket_start[p + 1] - bucket_start[p] >= 2:
        return True
    t = bucket_index[p]
    if p > first and t - bucket_index[p - 1] <= scope:
        return True
    if p + 1 < last and bucket_index[p + 1] - t <= scope:
        return True
    return False


@njit(cache=True, nogil=True)
def count_eligible(bucket_index, bucket_start, entity_bstart, scope):
    total = 0
    for ent in range(entity_bstart.shape[0] - 1):
        first = entity_bstart[ent]
        last = entity_bstart[ent + 1]
        for p in range(first, last):
            if is_eligible(bucket_index, bucket_start, first, last, p, scope):
                total += bucket_start[p + 1] - bucket_start[p]
    return total


@njit(cache=True, nogil=True)
def run_epoch(v, vout, m, b, codes, bucket_index, bucket_start, entity_bstart, entities,
              keep_prob, alias_prob, alias_idx, scope, gamma, n_neg, alpha0, total_targets,
              progress, wid, state, mode, update_attn, stats):
    """Train over ``entities`` once.

    ``progress`` is shared between workers (one slot each) and drives the
    linear learning-rate decay. ``stats`` receives
    [loss_sum, steps, attention_ops, last_lr].
    """
    cap = gamma
    ctx_codes = np.empty(cap, dtype=np.int64)
    ctx_slots = np.empty(cap, dtype=np.int64)
    negs = np.empty(max(n_neg, 1), dtype=np.int64)
    a = np.empty(cap, dtype=np.float64)
    e = np.empty(cap, dtype=np.float64)
    d = v.shape[1]
    h = np.empty(d, dtype=np.float64)
    g = np.empty(d, dtype=np.float64)
    gs = np.empty(n_neg + 1, dtype=np.float64)
    kept = np.empty(0, dtype=np.bool_)
    n_workers = progress.shape[0]
    vocab_size = alias_prob.shape[0]

    loss_sum = 0.0
    steps = 0
    ops = 0
    lr = alpha0
    for ei in range(entities.shape[0]):
        ent = entities[ei]
        first = entity_bstart[ent]
        last = entity_bstart[ent + 1]
        lo = bucket_start[first]
        hi = bucket_start[last]
        if kept.shape[0] < hi - lo:
            kept = np.empty(hi - lo, dtype=np.bool_)
        # per-occurrence subsampling, drawn once per epoch; indexed from lo
        for q in range(lo, hi):
            pk = keep_prob[codes[q]]
            kept[q - lo] = pk >= 1.0 or next_uniform(state) < pk
        kview = kept[: hi - lo]
        for p in range(first, last):
            eligible = is_eligible(bucket_index, bucket_start, first, last, p, scope)
            for occ in range(bucket_start[p], bucket_start[p + 1]):
                if not eligible:
                    continue
                processed = 0
                for w in range(n_workers):
                    processed += progress[w]
                progress[wid] += 1
                if not kview[occ - lo]:
                    continue
                n_ctx = assemble(codes, kview, lo, bucket_index, bucket_start, first, last, p, occ,
                                 scope, gamma, ctx_codes, ctx_slots)
                if n_ctx == 0:
                    continue
                target = codes[occ]
                n_draw = 0
                while n_draw < n_neg:
                    c = alias_draw(alias_prob, alias_idx, state)
                    if c != target or vocab_size < 2:
                        negs[n_draw] = c
                        n_draw += 1
                frac = 1.0 - processed / total_targets
                if frac < LR_FLOOR:
                    frac = LR_FLOOR
                lr = alpha0 * frac
                loss_sum += sgd_step(v, vout, m, b, target, ctx_codes, ctx_slots, n_ctx, negs, n_neg, lr,
                                     mode, update_attn, a, e, h, g, gs)
                steps += 1
                if mode == MODE_MCE:
                    ops += n_ctx
    stats[0] = loss_sum
    stats[1] = steps
    stats[2] = ops
    stats[3] = lr

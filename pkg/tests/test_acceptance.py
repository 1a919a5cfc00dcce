"""Acceptance criteria 1-9, one test each.

Every test prints a single ``[ACCEPT n] PASS|FAIL`` line with the measured
numbers, then asserts. Run alone with ``pytest tests/test_acceptance.py``.
"""

import json
import math
import time
from collections import Counter

import numpy as np
import pytest

from timeaware_cbow import model, synthgen
from timeaware_cbow.cli import run as cli
from timeaware_cbow.corpus import PatientRecord, build_vocab
from timeaware_cbow.evaluation import GroundTruth, evaluate, nmi, nns_p_at_1
from timeaware_cbow.model import ContextSet
from timeaware_cbow.negsample import build_sampler, draw_many
from timeaware_cbow.trainer import TrainConfig, Trainer, count_attention_ops, train

SEEDS = (1, 2, 3)


@pytest.fixture
def verdict(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n[ACCEPT {n}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, f"criterion {n} ({title}) failed: {detail}"

    return emit


# --- 1: gradient check --------------------------------------------------------


def _instance(rng):
    p = model.init_params(20, 8, 2, dtype=np.float64)
    for name in ("v", "vout", "m", "b"):
        setattr(p, name, rng.normal(0, 0.5, getattr(p, name).shape))
    target = int(rng.integers(20))
    ctx = ContextSet(target, [(int(rng.integers(20)), int(rng.integers(-2, 3)))
                              for _ in range(rng.integers(1, 7))])
    negs = [int(c) for c in rng.choice([c for c in range(20) if c != target], 3)]
    return p, ctx, negs


def _central_diff(p, ctx, negs, eps):
    out = {}
    for name in ("v", "vout", "m", "b"):
        arr = getattr(p, name)
        num = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            up = model.forward_loss(p, ctx, negs)
            arr[idx] = orig - eps
            down = model.forward_loss(p, ctx, negs)
            arr[idx] = orig
            num[idx] = (up - down) / (2 * eps)
        out[name] = num
    return out


def test_1_gradient_correctness(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        p, ctx, negs = _instance(rng)
        ana = model.gradients(p, ctx, negs)
        num = _central_diff(p, ctx, negs, 1e-5)
        for name in ana:
            den = max(np.abs(num[name]).max(), np.abs(ana[name]).max(), 1e-8)
            worst = max(worst, np.abs(num[name] - ana[name]).max() / den)
    secs = time.perf_counter() - t0
    verdict(1, "gradient correctness", worst < 1e-4 and secs < 10,
            f"100 instances, max rel err {worst:.2e} (< 1e-4), {secs:.1f}s (< 10s)")


# --- 2: CBOW reduction ----------------------------------------------------------


def test_2_cbow_reduction(verdict):
    rng = np.random.default_rng(7)
    recs = []
    n = 0
    while n < 1000:
        k = min(int(rng.integers(5, 30)), 1000 - n)
        days = np.sort(rng.integers(0, 365, size=k))
        recs.append(PatientRecord(f"e{len(recs)}", [(int(d), f"c{int(rng.integers(40))}") for d in days]))
        n += k
    vocab, enc = build_vocab(recs, 1)
    t0 = time.perf_counter()
    base = dict(dim=20, scope=20, gamma=20, epochs=3, seed=11, workers=1, sample_threshold=1e-2)
    mce, rep = train(enc, vocab, TrainConfig(mode="mce", freeze_attention=True, **base))
    cbow = train(enc, vocab, TrainConfig(mode="cbow", **base))[0]
    secs = time.perf_counter() - t0
    same = mce.v.tobytes() == cbow.v.tobytes()
    verdict(2, "CBOW reduction", same and secs < 5,
            f"{n} events, {sum(rep.steps_per_epoch)} steps, embeddings bit-identical={same}, {secs:.2f}s (< 5s)")


# --- 3: sampler fidelity -----------------------------------------------------------


def test_3_sampler_fidelity(verdict):
    counts = np.random.default_rng(3).integers(1, 5000, size=100).tolist()
    w = [c**0.75 for c in counts]
    exact = np.array([x / math.fsum(w) for x in w])
    t0 = time.perf_counter()
    draws = draw_many(build_sampler(counts), np.random.default_rng(0), 10**6)
    secs = time.perf_counter() - t0
    tv = 0.5 * np.abs(np.bincount(draws, minlength=100) / 10**6 - exact).sum()
    verdict(3, "sampler fidelity", tv < 0.01 and secs < 5, f"TV {tv:.5f} (< 0.01), {secs:.2f}s (< 5s)")


# --- 4: metric oracles -------------------------------------------------------------


def _nmi_oracle(pred, truth):
    n = len(pred)
    joint, cp, ct = Counter(zip(pred, truth)), Counter(pred), Counter(truth)
    hp = -sum(c / n * math.log(c / n) for c in cp.values())
    ht = -sum(c / n * math.log(c / n) for c in ct.values())
    if hp == 0 and ht == 0:
        return 1.0
    if hp == 0 or ht == 0:
        return 0.0
    return sum(c / n * math.log(c * n / (cp[a] * ct[b])) for (a, b), c in joint.items()) / math.sqrt(hp * ht)


def _p_at_1_oracle(x, labels):
    n = len(labels)
    hits = elig = 0
    for i in range(n):
        if labels.count(labels[i]) < 2:
            continue
        elig += 1
        best, bj = -math.inf, -1
        for j in range(n):
            if j != i:
                s = float(x[i] @ x[j]) / (math.hypot(*x[i]) * math.hypot(*x[j]))
                if s > best:
                    best, bj = s, j
        hits += labels[bj] == labels[i]
    return hits / elig, elig


def test_4_metric_oracles(verdict):
    rng = np.random.default_rng(4)
    nmi_err, p_mismatch = 0.0, 0
    for _ in range(50):
        n = int(rng.integers(2, 13))
        pred = rng.integers(0, 4, size=n).tolist()
        truth = rng.integers(0, 4, size=n).tolist()
        nmi_err = max(nmi_err, abs(nmi(pred, truth) - _nmi_oracle(pred, truth)))
        x = rng.normal(size=(n, 3))
        labels = [int(v) for v in rng.integers(0, max(1, n // 2), size=n)]
        labels[1] = labels[0]
        p_mismatch += nns_p_at_1(x, labels) != _p_at_1_oracle(x, labels)
    ok = nmi_err < 1e-12 and p_mismatch == 0
    verdict(4, "metric oracles", ok, f"50 instances, max |NMI diff| {nmi_err:.1e}, P@1 mismatches {p_mismatch}")


# --- 5 + 6: synthetic recovery ------------------------------------------------------


def _protocol(seed, noise, visit, modes):
    cfg = synthgen.SynthConfig(seed=seed, noise_rate=noise, visit_prob=visit)
    syn = synthgen.generate(cfg)
    vocab, enc = build_vocab(syn.records, 5)
    truth = GroundTruth(syn.cluster_labels, syn.neighbor_labels)
    out = {}
    for mode in modes:
        tc = TrainConfig(dim=50, scope=20, gamma=60, epochs=5, mode=mode, seed=seed, sample_threshold=0)
        params, report = train(enc, vocab, tc)
        res = {"nmi": evaluate(vocab.codes, params.v, truth, k=10, seed=seed)["nmi"], "report": report}
        if mode == "mce":
            weights = model.profile_weights(params)
            by_profile = {}
            for prof in synthgen.PROFILES:
                rows = [vocab.index[synthgen.group_code(g, i)] for g, p in enumerate(cfg.profiles) if p == prof
                        for i in range(cfg.codes_per_group) if synthgen.group_code(g, i) in vocab]
                by_profile[prof] = weights[rows]
            res["profiles"] = by_profile
        out[mode] = res
    return out


@pytest.fixture(scope="module")
def synthetic_runs():
    t0 = time.perf_counter()
    default = {s: _protocol(s, 0.1, 1.0, ("mce",)) for s in SEEDS}
    noisy = {s: _protocol(s, 0.3, 0.3, ("mce", "cbow")) for s in SEEDS}
    return default, noisy, time.perf_counter() - t0


def test_5_synthetic_cluster_recovery(verdict, synthetic_runs):
    default, noisy, secs = synthetic_runs
    nmi_default = float(np.median([default[s]["mce"]["nmi"] for s in SEEDS]))
    nmi_mce = float(np.median([noisy[s]["mce"]["nmi"] for s in SEEDS]))
    nmi_cbow = float(np.median([noisy[s]["cbow"]["nmi"] for s in SEEDS]))
    ok = nmi_default >= 0.7 and nmi_mce >= nmi_cbow and secs < 300
    verdict(5, "synthetic cluster recovery", ok,
            f"median NMI default {nmi_default:.3f} (>= 0.7); noisy MCE {nmi_mce:.3f} >= CBOW {nmi_cbow:.3f}; "
            f"{secs:.0f}s (< 300s)")


def test_6_attention_profile_recovery(verdict, synthetic_runs):
    default, _, _ = synthetic_runs
    peak, stable, future, past = [], [], [], []
    for s in SEEDS:
        prof = default[s]["mce"]["profiles"]
        peak.append(np.mean([synthgen.profile_concentration(w, 1) for w in prof["peak"]]))
        stable.append(np.mean([synthgen.profile_concentration(w, 1) for w in prof["stable"]]))
        masses = np.array([synthgen.directional_mass(w, 2) for w in prof["sequela"]])
        past.append(masses[:, 0].mean())
        future.append(masses[:, 1].mean())
    peak_m, stable_m = float(np.median(peak)), float(np.median(stable))
    fut_m, past_m = float(np.median(future)), float(np.median(past))
    verdict(6, "attention profile recovery", peak_m > stable_m and fut_m > past_m,
            f"median window-1 concentration peak {peak_m:.3f} > stable {stable_m:.3f}; "
            f"sequela mass future {fut_m:.3f} > past {past_m:.3f}")


# --- 7: complexity bound -------------------------------------------------------------


def test_7_complexity_bound(verdict, synthetic_runs):
    default, noisy, _ = synthetic_runs
    worst = 0.0
    for runs in (default, noisy):
        for s in SEEDS:
            rep = runs[s]["mce"]["report"]
            worst = max(worst, max(rep.attention_ops_per_epoch) / (rep.targets * 60))
    # saturated corpus: one event per day, so every target has far more than 2*gamma candidates
    recs = [PatientRecord(f"e{i}", [(d, f"c{(i * 7 + d) % 23}") for d in range(300)]) for i in range(10)]
    vocab, enc = build_vocab(recs, 1)
    ops = {}
    for gamma in (15, 30):
        cfg = TrainConfig(dim=16, scope=10, gamma=gamma, sample_threshold=0)
        ops[gamma] = count_attention_ops(cfg, enc, vocab)
        worst = max(worst, ops[gamma] / (Trainer(enc, vocab, cfg).targets * gamma))
    ok = worst <= 1.0 and ops[30] <= 2 * ops[15]
    verdict(7, "complexity bound", ok,
            f"max ops/(targets*gamma) {worst:.3f} (<= 1); ops gamma 15 -> 30: {ops[15]} -> {ops[30]} (<= 2x)")


# --- 8: determinism ------------------------------------------------------------------


def _pipeline(root):
    root.mkdir()
    assert cli(["gen-synth", "--out", str(root / "data"), "--entities", "400", "--seed", "5"]) == 0
    assert cli(["train", str(root / "data" / "corpus.tsv"), "--out", str(root / "model"), "--dim", "20",
                "--epochs", "2", "--seed", "5", "--threads", "1", "--save-output-vectors"]) == 0
    assert cli(["eval", "--embeddings", str(root / "model" / "embeddings.txt"),
                "--clusters", str(root / "data" / "clusters.tsv"),
                "--neighbors", str(root / "data" / "neighbors.tsv"), "--out", str(root / "metrics.json")]) == 0
    files = {}
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        data = path.read_bytes()
        if path.name == "report.json":
            rep = json.loads(data)
            rep.pop("wall_seconds")
            data = json.dumps(rep, sort_keys=True).encode()
        files[str(path.relative_to(root))] = data
    return files


def test_8_determinism(verdict, tmp_path):
    a, b = _pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")
    diff = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    verdict(8, "determinism", not diff and len(a) >= 10,
            f"{len(a)} output files compared, differing: {diff or 'none'}")


# --- 9: throughput -----------------------------------------------------------------


def test_9_throughput(verdict):
    rng = np.random.default_rng(9)
    # dense daily events: every target's context saturates at gamma=60
    recs = [PatientRecord(f"e{i}", [(int(d), f"c{int(c)}") for d, c in
                                    zip(np.sort(rng.integers(0, 365, 400)), rng.integers(0, 500, 400))])
            for i in range(60)]
    vocab, enc = build_vocab(recs, 1)
    cfg = TrainConfig(dim=100, scope=20, gamma=60, epochs=1, sample_threshold=0, workers=1)
    trainer = Trainer(enc, vocab, cfg)
    trainer.fit()  # warm-up
    best = 0.0
    for _ in range(3):
        _, rep = trainer.fit()
        best = max(best, rep.steps_per_epoch[0] / rep.wall_seconds)
    mean_ctx = rep.attention_ops_per_epoch[0] / rep.steps_per_epoch[0]
    verdict(9, "throughput", best >= 25_000,
            f"{best:,.0f} steps/s at d=100, gamma=60, mean context {mean_ctx:.1f} (>= 25,000; target 50k / 2)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

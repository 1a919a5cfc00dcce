# %% [markdown]
# # Training embeddings with temporal attention
#
# Each target code is predicted from the codes within `scope` weeks of it.
# Context codes are mixed with weights that depend on the target and on the
# offset in weeks, so the model learns how far ahead or behind each code looks.

# %%
import numpy as np

from timeaware_cbow import build_vocab, model, synthgen
from timeaware_cbow.evaluation import GroundTruth, evaluate
from timeaware_cbow.trainer import TrainConfig, train

syn = synthgen.generate(synthgen.SynthConfig(seed=1))
vocab, records = build_vocab(syn.records, min_count=5)
print(len(vocab), "codes,", sum(len(r.events) for r in records), "events")

# %% [markdown]
# Subsampling is turned off: every code in this vocabulary is frequent relative
# to the usual threshold, so it would thin everything evenly.

# %%
cfg = TrainConfig(dim=50, scope=20, gamma=60, epochs=5, sample_threshold=0, seed=1)
params, report = train(records, vocab, cfg)
print("loss per epoch:", np.round(report.mean_loss_per_epoch, 3))
print(f"{report.targets} targets per epoch, {report.wall_seconds:.1f}s")

# %%
truth = GroundTruth(syn.cluster_labels, syn.neighbor_labels)
print(evaluate(vocab.codes, params.v, truth, k=10))

# %% [markdown]
# Attention profiles: softmax of each code's offset scores. Peak codes should
# put their mass near offset 0, sequela codes should lean to the future.

# %%
weights = model.profile_weights(params)
for profile in synthgen.PROFILES:
    rows = [vocab.index[synthgen.group_code(g, i)]
            for g, p in enumerate(syn.config.profiles) if p == profile
            for i in range(syn.config.codes_per_group)]
    w = weights[rows]
    conc = np.mean([synthgen.profile_concentration(x, 1) for x in w])
    past, future = np.mean([synthgen.directional_mass(x) for x in w], axis=0)
    print(f"{profile:8s} |delta|<=1: {conc:.3f}  past: {past:.3f}  future: {future:.3f}")

# %%
# mean profile per archetype, offsets -20..20
for profile in ("peak", "stable"):
    rows = [vocab.index[synthgen.group_code(g, 0)] for g, p in enumerate(syn.config.profiles) if p == profile]
    print(profile, np.round(weights[rows].mean(0)[15:26], 3))

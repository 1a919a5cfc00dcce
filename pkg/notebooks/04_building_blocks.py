# %% [markdown]
# # Building blocks: contexts, negatives, metrics

# %%
import numpy as np

from timeaware_cbow.corpus import PatientRecord, build_vocab, bucketize, keep_probability
from timeaware_cbow.evaluation import kmeans, nmi, nns_p_at_1
from timeaware_cbow.negsample import build_sampler, draw_many
from timeaware_cbow.trainer import assemble_contexts

# %% [markdown]
# ## Temporal contexts
#
# Days are bucketed into weeks. A target sees every other occurrence within
# `scope` weeks; past the cap, nearer offsets win and the past wins ties.

# %%
rec = PatientRecord("p1", [(0, "A"), (3, "B"), (8, "C"), (86, "D")])
vocab, (encoded,) = build_vocab([rec], min_count=1)
seq = bucketize(encoded, 7)
print(seq.buckets)
for gamma in (60, 1):
    ctx = assemble_contexts(seq, 0, 1, scope=10, gamma=gamma)
    print(vocab.codes[ctx.target], [(vocab.codes[c], d) for c, d in ctx.entries])

# %% [markdown]
# ## Negative sampling
#
# Alias tables over count^0.75 give O(1) draws.

# %%
counts = [8, 1]
s = build_sampler(counts)
print(s.probabilities)
draws = draw_many(s, np.random.default_rng(0), 100_000)
print("empirical P(code 0):", (draws == 0).mean())

# %%
# frequent codes are dropped more often during training
for c in (10, 100, 1_000, 10_000):
    print(c, round(keep_probability(c, 100_000, 1e-4), 4))

# %% [markdown]
# ## Metrics

# %%
rng = np.random.default_rng(0)
centers = rng.normal(size=(3, 8))
labels = np.repeat([0, 1, 2], 10)
x = centers[labels] + rng.normal(0, 0.3, (30, 8))
res = kmeans(x, 3)
print("nmi:", nmi(res.labels, labels), "inertia by iteration:", np.round(res.history, 3))
print("p@1:", nns_p_at_1(x, labels))

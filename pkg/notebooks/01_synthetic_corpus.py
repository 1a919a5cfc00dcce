# %% [markdown]
# # A synthetic event corpus
#
# Real visit logs are not shipped with this package, so everything here runs on
# generated data. Each group of codes follows one emission schedule around an
# episode start: `peak` codes bunch up in two time units, `stable` codes spread
# to the end of the horizon, `sequela` codes show up once and then keep coming
# back a few units later.

# %%
from collections import Counter

import numpy as np

from timeaware_cbow import synthgen

cfg = synthgen.SynthConfig(n_entities=500, seed=0)
syn = synthgen.generate(cfg)
print(syn.stats())
print("profiles by group:", cfg.profiles)

# %% [markdown]
# One entity, grouped by week. Codes `Gxx_yy` belong to group `xx`; `Nxx` are
# background noise with no label.

# %%
rec = syn.records[0]
weeks = {}
for day, code in rec.events:
    weeks.setdefault(day // cfg.time_unit_days, []).append(code)
for week in sorted(weeks):
    print(f"week {week:2d}: {' '.join(weeks[week])}")

# %% [markdown]
# How far apart in time do emissions of one episode land? For single-episode
# entities the spread of occupied weeks is the schedule's footprint.

# %%
for profile in synthgen.PROFILES:
    one = synthgen.generate(synthgen.SynthConfig(
        n_groups=1, profiles=[profile], n_entities=300, episodes_per_entity=0.0, noise_rate=0.0, seed=1))
    spans = [max(d for d, _ in r.events) // 7 - min(d for d, _ in r.events) // 7 for r in one.records]
    print(f"{profile:8s} median span {np.median(spans):4.1f} weeks, max {max(spans)}")

# %% [markdown]
# Frequencies are flat inside a group, so no single code dominates.

# %%
counts = Counter(c for r in syn.records for _, c in r.events)
print(counts.most_common(5))
print("noise share:", sum(v for c, v in counts.items() if c.startswith("N")) / sum(counts.values()))

# %%
# writes corpus.tsv, clusters.tsv, neighbors.tsv and manifest.json
# syn.write("synthetic")

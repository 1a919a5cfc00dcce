"""Synthetic event corpora with planted code groups and temporal profiles.

Each group of codes follows one of three emission schedules relative to an
episode start ``u0`` (in time units):

- ``peak``: every emission falls in ``[u0, u0 + 1]``
- ``stable``: emissions spread uniformly over ``[u0, horizon)``
- ``sequela``: one onset emission at ``u0``, the rest spread over
  ``[u0 + 2, u0 + 26]``

Background noise codes come from a separate pool and carry no labels.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import PatientRecord
from .model import AttentionProfile

PROFILES = ("peak", "stable", "sequela")
SEQUELA_GAP = 2
SEQUELA_SPAN = 26


@dataclass
class SynthConfig:
    n_groups: int = 10
    codes_per_group: int = 20
    profiles: list[str] | None = None  # one per group; None cycles peak/stable/sequela
    n_entities: int = 2000
    episodes_per_entity: float = 5.0  # Poisson mean, at least one episode
    emissions_per_episode: float = 16.0  # Poisson mean, at least one emission
    horizon_units: int = 52
    noise_rate: float = 0.1  # chance of one noise code per occupied time unit
    noise_codes: int = 50
    visit_prob: float = 1.0  # chance a time unit is observable; <1 leaves visit gaps
    time_unit_days: int = 7
    seed: int = 0

    def __post_init__(self):
        if self.profiles is None:
            self.profiles = [PROFILES[g % 3] for g in range(self.n_groups)]
        if len(self.profiles) != self.n_groups:
            raise ValueError("need one profile per group")
        bad = set(self.profiles) - set(PROFILES)
        if bad:
            raise ValueError(f"unknown profiles {sorted(bad)}")
        if self.n_groups >= 3 and set(self.profiles) != set(PROFILES):
            raise ValueError("every profile must be used at least once when n_groups >= 3")
        if not 0 <= self.noise_rate <= 1 or not 0 < self.visit_prob <= 1:
            raise ValueError("noise_rate must be in [0, 1] and visit_prob in (0, 1]")
        if self.horizon_units < 1 or self.codes_per_group < 1 or self.n_entities < 1:
            raise ValueError("horizon_units, codes_per_group and n_entities must be positive")


def group_code(g: int, i: int) -> str:
    return f"G{g:02d}_{i:02d}"


def noise_code(j: int) -> str:
    return f"N{j:02d}"


@dataclass
class SynthCorpus:
    config: SynthConfig
    records: list[PatientRecord]
    cluster_labels: dict[str, str]
    neighbor_labels: dict[str, str]
    episodes: list[dict] = field(default_factory=list)

    def corpus_lines(self):
        for rec in self.records:
            for day, code in rec.events:
                yield f"{rec.entity_id}\t{day}\t{code}\n"

    def stats(self) -> dict:
        counts = Counter(code for rec in self.records for _, code in rec.events)
        return {
            "entities": len(self.records),
            "events": sum(counts.values()),
            "unique_codes": len(counts),
        }

    def manifest(self) -> dict:
        cfg = self.config
        return {
            "config": asdict(cfg),
            "groups": [
                {"group": g, "profile": p, "codes": [group_code(g, i) for i in range(cfg.codes_per_group)]}
                for g, p in enumerate(cfg.profiles)
            ],
            "schedules": {
                "peak": "units [u0, u0+1]",
                "stable": "units [u0, horizon)",
                "sequela": f"one onset at u0, rest over [u0+{SEQUELA_GAP}, u0+{SEQUELA_SPAN}]",
            },
            "noise_codes": [noise_code(j) for j in range(cfg.noise_codes)],
            "stats": self.stats(),
        }

    def write(self, outdir: str | Path) -> dict[str, Path]:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": out / "corpus.tsv",
            "clusters": out / "clusters.tsv",
            "neighbors": out / "neighbors.tsv",
            "manifest": out / "manifest.json",
        }
        with open(paths["corpus"], "w", encoding="utf-8") as fh:
            fh.writelines(self.corpus_lines())
        for key, labels in (("clusters", self.cluster_labels), ("neighbors", self.neighbor_labels)):
            with open(paths[key], "w", encoding="utf-8") as fh:
                fh.writelines(f"{c}\t{lab}\n" for c, lab in labels.items())
        with open(paths["manifest"], "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


def _episode_units(profile: str, u0: int, k: int, horizon: int, rng: np.random.Generator) -> np.ndarray:
    if profile == "peak":
        return u0 + rng.integers(0, 2, size=k)
    if profile == "stable":
        return rng.integers(u0, horizon, size=k)
    rest = rng.integers(u0 + SEQUELA_GAP, u0 + SEQUELA_SPAN + 1, size=k - 1)
    return np.concatenate([[u0], rest])


def generate(config: SynthConfig | None = None) -> SynthCorpus:
    cfg = config or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    unit = cfg.time_unit_days
    H = cfg.horizon_units
    records, episodes = [], []
    for e in range(cfg.n_entities):
        entity = f"e{e:05d}"
        visible = rng.random(H) < cfg.visit_prob if cfg.visit_prob < 1 else np.ones(H, dtype=bool)
        events: list[tuple[int, str]] = []
        n_ep = max(1, int(rng.poisson(cfg.episodes_per_entity)))
        for _ in range(n_ep):
            g = int(rng.integers(cfg.n_groups))
            profile = cfg.profiles[g]
            u0 = int(rng.integers(0, H))
            k = max(1, int(rng.poisson(cfg.emissions_per_episode)))
            units = _episode_units(profile, u0, k, H, rng)
            members = rng.integers(0, cfg.codes_per_group, size=k)
            days = units * unit + rng.integers(0, unit, size=k)
            emitted = 0
            for u, i, day in zip(units, members, days):
                if u < H and visible[u]:
                    events.append((int(day), group_code(g, int(i))))
                    emitted += 1
            episodes.append({"entity": entity, "group": g, "profile": profile, "u0": u0, "emitted": emitted})
        if cfg.noise_rate > 0:
            for u in sorted({d // unit for d, _ in events}):
                if rng.random() < cfg.noise_rate:
                    day = u * unit + int(rng.integers(0, unit))
                    events.append((day, noise_code(int(rng.integers(cfg.noise_codes)))))
        if events:
            events.sort(key=lambda ev: ev[0])
            records.append(PatientRecord(entity, events))
    labels = {group_code(g, i): f"g{g:02d}" for g in range(cfg.n_groups) for i in range(cfg.codes_per_group)}
    return SynthCorpus(cfg, records, labels, dict(labels), episodes)


def profile_concentration(profile, window: int) -> float:
    """Attention mass at offsets ``|delta| <= window``."""
    w = np.asarray(profile.weights if isinstance(profile, AttentionProfile) else profile, dtype=np.float64)
    scope = (len(w) - 1) // 2
    if not 0 <= window <= scope:
        raise ValueError(f"window must lie in [0, {scope}]")
    return float(w[scope - window: scope + window + 1].sum())


def directional_mass(profile, lo: int = 2) -> tuple[float, float]:
    """(mass at deltas in [-S, -lo], mass at deltas in [lo, S])."""
    w = np.asarray(profile.weights if isinstance(profile, AttentionProfile) else profile, dtype=np.float64)
    scope = (len(w) - 1) // 2
    return float(w[: scope - lo + 1].sum()), float(w[scope + lo:].sum())

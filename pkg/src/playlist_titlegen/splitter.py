"""Chronological train/val/test split and train-set frequency statistics."""
import datetime as dt
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

BUCKETS = ("Q1", "Q2", "Q3", "Q4")


class DegenerateSplit(ValueError):
    pass


@dataclass(frozen=True)
class SplitConfig:
    cutoff_date: dt.date
    val_fraction_of_holdout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.val_fraction_of_holdout < 1.0:
            raise ValueError("val_fraction_of_holdout must lie in (0, 1)")


@dataclass
class SplitResult:
    train: list
    val: list
    test: list
    ratios: tuple  # (train %, holdout %)

    def manifest(self, cfg):
        return {
            "cutoff": cfg.cutoff_date.isoformat(),
            "val_fraction_of_holdout": cfg.val_fraction_of_holdout,
            "seed": cfg.seed,
            "ratios": list(self.ratios),
            "train": [p.pid for p in self.train],
            "val": [p.pid for p in self.val],
            "test": [p.pid for p in self.test],
        }


@dataclass
class FrequencyTable:
    track_counts: Counter = field(default_factory=Counter)
    artist_counts: Counter = field(default_factory=Counter)

    def merge(self, other):
        return FrequencyTable(self.track_counts + other.track_counts,
                              self.artist_counts + other.artist_counts)


@dataclass(frozen=True)
class FrequencyStats:
    f_t: float
    f_a: float


def chronological_split(ps, cfg):
    """Train = strictly before the cutoff; the rest is shuffled by seed into val/test."""
    train = [p for p in ps if p.modified_at < cfg.cutoff_date]
    holdout = [p for p in ps if p.modified_at >= cfg.cutoff_date]
    if not train or not holdout:
        raise DegenerateSplit(
            f"cutoff {cfg.cutoff_date} leaves {len(train)} train and {len(holdout)} holdout playlists")
    # sorted first so the shuffle does not depend on input order
    holdout.sort(key=lambda p: p.pid)
    order = np.random.default_rng(cfg.seed).permutation(len(holdout))
    holdout = [holdout[i] for i in order]
    n_val = math.floor(cfg.val_fraction_of_holdout * len(holdout) + 0.5)
    n = len(ps)
    ratios = (100.0 * len(train) / n, 100.0 * len(holdout) / n)
    return SplitResult(train, holdout[:n_val], holdout[n_val:], ratios)


def apply_manifest(ps, manifest):
    """Rebuild a split from a manifest's pid lists."""
    by_pid = {p.pid: p for p in ps}
    missing = [pid for part in ("train", "val", "test") for pid in manifest[part] if pid not in by_pid]
    if missing:
        raise KeyError(f"manifest pids absent from corpus: {missing[:10]}")
    parts = [[by_pid[pid] for pid in manifest[k]] for k in ("train", "val", "test")]
    return SplitResult(*parts, tuple(manifest["ratios"]))


def build_frequency_table(train):
    tracks = Counter()
    artists = Counter()
    for p in train:
        for t in p.tracks:
            tracks[t.track_id] += 1
            for a in t.artist_ids:
                artists[a] += 1
    return FrequencyTable(tracks, artists)


def playlist_frequency_stats(p, ft):
    if not p.tracks:
        raise ValueError(f"playlist {p.pid!r} has no tracks")
    track_total = sum(ft.track_counts.get(t.track_id, 0) for t in p.tracks)
    artist_slots = [a for t in p.tracks for a in t.artist_ids]
    artist_total = sum(ft.artist_counts.get(a, 0) for a in artist_slots)
    return FrequencyStats(track_total / len(p.tracks), artist_total / len(artist_slots))


def quartile_buckets(stats):
    """Map pid -> Q1..Q4 by ascending value; leftover items go to the lowest buckets."""
    items = sorted(stats, key=lambda kv: (kv[1], kv[0]))
    n = len(items)
    if n < 4:
        raise ValueError(f"need at least 4 entries for quartile buckets, got {n}")
    base, extra = divmod(n, 4)
    out = {}
    start = 0
    for b, name in enumerate(BUCKETS):
        size = base + (1 if b < extra else 0)
        for pid, _ in items[start:start + size]:
            out[pid] = name
        start += size
    return out


def trim_percentile(values, pct):
    """Drop values above the nearest-rank pct-th percentile (input order kept)."""
    if not values:
        raise ValueError("trim_percentile of an empty list")
    if not 0 < pct < 100:
        raise ValueError("pct must lie in (0, 100)")
    ordered = sorted(values)
    rank = max(1, math.ceil(pct * len(ordered) / 100))
    threshold = ordered[rank - 1]
    return [v for v in values if v <= threshold]


def write_frequency_tsv(counts, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key in sorted(counts):
            f.write(f"{key}\t{counts[key]}\n")


def read_frequency_tsv(path):
    counts = Counter()
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                key, count = line.rstrip("\n").split("\t")
                counts[key] = int(count)
    return counts


def write_split_manifest(result, cfg, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(result.manifest(cfg), f, indent=1, ensure_ascii=False)
        f.write("\n")

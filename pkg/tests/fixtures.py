"""Shared fixtures: a hand-scored 10-pair metric corpus and small playlist builders."""
import datetime as dt
import math

import numpy as np

from playlist_titlegen.corpus import Playlist, TrackRef

HAND_PAIRS = [
    ("a b c d", "a b c d"),
    ("a b c d", "d c b a"),
    ("x y", "x y z"),
    ("p q r", "s t"),
    ("a a b", "a a a"),
    ("k l m n", "k l"),
    ("u v w", "w u v"),
    ("e f", "f"),
    ("g h i", "g i h"),
    ("j", "j j"),
]

# Worked by hand. Unigram clipped matches 22 of 27 candidate tokens against 29
# reference tokens; bigram matches 7 of 17.
_BP = math.exp(1 - 29 / 27)
HAND_EXPECTED = {
    "bleu_1": _BP * 22 / 27,
    "bleu_2": _BP * math.sqrt(22 / 27 * 7 / 17),
    # per-pair F1 = 2m / (|c| + |r|)
    "rouge_1": (1 + 1 + 4 / 5 + 0 + 2 / 3 + 2 / 3 + 1 + 2 / 3 + 1 + 2 / 3) / 10,
    "rouge_2": (1 + 0 + 2 / 3 + 0 + 1 / 2 + 1 / 2 + 1 / 2 + 0 + 0 + 0) / 10,
    "meteor": (127 / 128 + 1 / 2 + 25 / 28 + 0 + 5 / 8 + 75 / 152 + 23 / 27 + 5 / 19 + 1 / 2 + 5 / 11) / 10,
    "distinct_1": 19 / 27,
    "distinct_2": 16 / 17,
    "distinct_3": 1.0,
    # one-hot token embeddings: greedy matching scores 1 on shared tokens, 0 elsewhere
    "bert_score": (1 + 1 + 4 / 5 + 0 + 4 / 5 + 2 / 3 + 1 + 2 / 3 + 1 + 1) / 10,
    # cosine of token-count vectors
    "sentbert": (5 + 2 / math.sqrt(6) + 2 / math.sqrt(5) + math.sqrt(2)) / 10,
}

HAND_PER_PAIR_METEOR = [127 / 128, 1 / 2, 25 / 28, 0.0, 5 / 8, 75 / 152, 23 / 27, 5 / 19, 1 / 2, 5 / 11]


def hand_pairs():
    from playlist_titlegen.metrics import EvalPair

    return [EvalPair(f"h{i}", tuple(r.split()), tuple(c.split())) for i, (r, c) in enumerate(HAND_PAIRS)]


def one_hot_embeddings(pairs):
    alphabet = sorted({t for p in pairs for t in (*p.reference, *p.candidate)})
    eye = np.eye(len(alphabet))
    row = {t: eye[i] for i, t in enumerate(alphabet)}
    return {p.pid: (np.array([row[t] for t in p.reference]), np.array([row[t] for t in p.candidate]))
            for p in pairs}


def playlist(pid, title, date="2019-06-01", n_tracks=3, artists=None, track_ids=None):
    if isinstance(date, str):
        date = dt.date.fromisoformat(date)
    track_ids = track_ids or [f"{pid}-t{i}" for i in range(n_tracks)]
    artists = artists or [f"art{i % 2}" for i in range(len(track_ids))]
    tracks = tuple(TrackRef(t, (a,) if isinstance(a, str) else tuple(a)) for t, a in zip(track_ids, artists))
    return Playlist(pid, title, date, tracks)


def random_examples(rng, n, in_vocab, out_vocab, max_in=6, max_title=5):
    """EncodedExamples with ids drawn from the non-special range."""
    from playlist_titlegen.vocab import BOS, EOS, EncodedExample

    out = []
    for i in range(n):
        k = int(rng.integers(1, max_in + 1))
        m = int(rng.integers(0, max_title - 1))
        inputs = tuple(int(x) for x in rng.integers(1, in_vocab, size=k))
        words = tuple(int(x) for x in rng.integers(4, out_vocab, size=m))
        out.append(EncodedExample(f"e{i}", inputs, (BOS, *words, EOS)))
    return out

"""Seeded synthetic playlist corpus with a long-tail track distribution.

Artists own contiguous blocks of tracks and carry a genre and a mood; a
playlist is built around one seed artist and titled from templates filled with
that artist's genre and mood words, so titles are predictable from artist IDs
while individual tracks follow a Zipf popularity law.
"""
import datetime as dt
import json
import math
from dataclasses import dataclass

import numpy as np

from .corpus import Playlist, TrackRef

DEFAULT_GRAMMAR = {
    "genres": ["jazz", "rock", "hiphop", "lofi", "classical", "indie", "metal", "house",
               "soul", "folk", "reggae", "techno", "blues", "country", "ambient", "punk",
               "disco", "funk", "trap", "kpop", "ballad", "edm", "gospel", "latin"],
    "moods": ["chill", "sad", "happy", "energetic", "calm", "dreamy", "dark", "romantic",
              "groovy", "mellow", "epic", "nostalgic", "angry", "peaceful", "cheerful", "moody",
              "gloomy", "uplifting", "sentimental", "soothing", "intense", "playful", "lonely",
              "hopeful", "warm", "cozy", "wild", "bittersweet", "serene", "fierce"],
    "contexts": ["study", "workout", "night", "morning", "drive", "party", "rain", "sleep",
                 "coffee", "summer"],
    "templates": [
        "{mood} {genre} for {context}",
        "{mood} {genre} {context} mix",
        "best {mood} {genre} songs",
        "{genre} vibes {mood} {context}",
    ],
    "noise_titles": ["my favorites", "good music to listen to", "best music ever", "songs i like"],
}


@dataclass(frozen=True)
class SynthConfig:
    n_playlists: int = 2000
    n_tracks: int = 6000
    tracks_per_artist: int = 20
    artists_per_track: int = 1
    zipf: float = 1.1
    start_date: dt.date = dt.date(2015, 1, 1)
    end_date: dt.date = dt.date(2020, 12, 31)
    min_tracks: int = 5
    max_tracks: int = 15
    seed_artist_share: float = 0.5
    recency_boost: float = 4.0
    recency_days: float = 180.0
    noise_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("n_playlists", "n_tracks", "tracks_per_artist", "artists_per_track", "min_tracks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_tracks < self.min_tracks:
            raise ValueError("max_tracks < min_tracks")
        if self.zipf <= 0:
            raise ValueError("zipf exponent must be positive")
        if self.end_date <= self.start_date:
            raise ValueError("end_date must follow start_date")
        if not 0 <= self.noise_fraction < 1:
            raise ValueError("noise_fraction must lie in [0, 1)")


def load_grammar(path=None):
    if path is None:
        return DEFAULT_GRAMMAR
    with open(path, encoding="utf-8") as f:
        grammar = json.load(f)
    for key in ("genres", "moods", "contexts", "templates"):
        if not grammar.get(key):
            raise ValueError(f"grammar needs a non-empty {key!r} list")
    grammar.setdefault("noise_titles", DEFAULT_GRAMMAR["noise_titles"])
    return grammar


def grammar_tags(grammar):
    """Musically meaningful words of a grammar, used as the filter tag list."""
    return sorted(set(grammar["genres"]) | set(grammar["moods"]))


def _sample(rng, weights, k):
    """k distinct indices drawn proportionally to weights."""
    k = min(k, int(np.count_nonzero(weights)))
    if k == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(len(weights), size=k, replace=False, p=weights / weights.sum())


def synth(cfg, grammar=None):
    grammar = grammar or DEFAULT_GRAMMAR
    rng = np.random.default_rng(cfg.seed)
    n_tracks = cfg.n_tracks
    n_artists = math.ceil(n_tracks / cfg.tracks_per_artist)
    primary = np.arange(n_tracks) // cfg.tracks_per_artist
    genre = rng.integers(len(grammar["genres"]), size=n_artists)
    mood = rng.integers(len(grammar["moods"]), size=n_artists)

    featured = []
    for t in range(n_tracks):
        extra = []
        if cfg.artists_per_track > 1:
            others = np.arange(n_artists) != primary[t]
            same = np.flatnonzero((genre == genre[primary[t]]) & others)
            k = min(cfg.artists_per_track - 1, len(same))
            extra = rng.choice(same, size=k, replace=False).tolist() if k else []
            short = min(cfg.artists_per_track - 1, n_artists - 1) - k
            if short > 0:
                # too few same-genre artists: top up from the rest of the catalogue
                rest = np.flatnonzero((genre != genre[primary[t]]) & others)
                extra += rng.choice(rest, size=short, replace=False).tolist()
            extra = sorted(extra)
        featured.append(extra)

    popularity = (rng.permutation(n_tracks) + 1.0) ** -cfg.zipf
    span = (cfg.end_date - cfg.start_date).days
    # a back catalogue released before the corpus window, then a steady release stream
    release = rng.integers(-span // 2, span + 1, size=n_tracks)

    track_genre = genre[primary]
    playlists = []
    for i in range(cfg.n_playlists):
        day = int(rng.integers(0, span + 1))
        date = cfg.start_date + dt.timedelta(days=day)
        age = day - release
        available = age >= 0
        weight = np.where(available,
                          popularity * (1.0 + cfg.recency_boost * np.exp(-np.maximum(age, 0) / cfg.recency_days)),
                          0.0)
        seed_track = _sample(rng, weight, 1)[0]
        artist = primary[seed_track]
        length = int(rng.integers(cfg.min_tracks, cfg.max_tracks + 1))
        n_seed = max(1, math.ceil(length * cfg.seed_artist_share))
        own = np.where(primary == artist, weight, 0.0)
        own[seed_track] = 0.0
        picked = [seed_track, *_sample(rng, own, n_seed - 1).tolist()]
        others = np.where((track_genre == genre[artist]) & (primary != artist), weight, 0.0)
        picked += _sample(rng, others, length - len(picked)).tolist()
        order = rng.permutation(len(picked))
        tracks = tuple(
            TrackRef(f"t{picked[j]:05d}",
                     tuple(f"a{a:04d}" for a in [primary[picked[j]], *featured[picked[j]]]))
            for j in order
        )
        if rng.random() < cfg.noise_fraction:
            kind = int(rng.integers(3))
            if kind == 0:
                title = grammar["noise_titles"][int(rng.integers(len(grammar["noise_titles"])))]
            elif kind == 1:
                title = f"{grammar['genres'][genre[artist]]} mix"
            else:
                title = _title(rng, grammar, genre[artist], mood[artist])
                tracks = tracks[:1]
        else:
            title = _title(rng, grammar, genre[artist], mood[artist])
        playlists.append(Playlist(f"p{i:06d}", title, date, tracks))
    return playlists


def _title(rng, grammar, g, m):
    template = grammar["templates"][int(rng.integers(len(grammar["templates"])))]
    context = grammar["contexts"][int(rng.integers(len(grammar["contexts"])))]
    return template.format(genre=grammar["genres"][g], mood=grammar["moods"][m], context=context)

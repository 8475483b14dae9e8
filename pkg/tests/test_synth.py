import datetime as dt
import json
from collections import Counter

import pytest

from playlist_titlegen import corpus as C
from playlist_titlegen.synth import DEFAULT_GRAMMAR, SynthConfig, grammar_tags, load_grammar, synth


def test_seed_fixed_run_is_byte_identical(tmp_path):
    cfg = SynthConfig(n_playlists=300, n_tracks=1000, seed=4)
    C.write_jsonl(synth(cfg), tmp_path / "a.jsonl")
    C.write_jsonl(synth(cfg), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    C.write_jsonl(synth(SynthConfig(n_playlists=300, n_tracks=1000, seed=5)), tmp_path / "c.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "c.jsonl").read_bytes()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_long_tail(seed):
    ps = synth(SynthConfig(n_playlists=2000, zipf=1.1, seed=seed))
    tracks = Counter(t.track_id for p in ps for t in p.tracks)
    artists = Counter(a for p in ps for t in p.tracks for a in t.artist_ids)
    rare_tracks = sum(c <= 2 for c in tracks.values()) / len(tracks)
    rare_artists = sum(c <= 2 for c in artists.values()) / len(artists)
    assert rare_tracks > 0.15
    assert rare_artists < rare_tracks


def test_single_and_multi_artist_tracks():
    ps = synth(SynthConfig(n_playlists=200, n_tracks=500, seed=0))
    assert all(len(t.artist_ids) == 1 for p in ps for t in p.tracks)
    multi = synth(SynthConfig(n_playlists=200, n_tracks=500, artists_per_track=3, seed=0))
    assert all(len(t.artist_ids) == 3 and len(set(t.artist_ids)) == 3 for p in multi for t in p.tracks)
    tiny = synth(SynthConfig(n_playlists=20, n_tracks=40, artists_per_track=5, seed=0))
    assert all(len(t.artist_ids) == 2 for p in tiny for t in p.tracks)


def test_shape_of_output():
    cfg = SynthConfig(n_playlists=400, n_tracks=800, seed=1)
    ps = synth(cfg)
    assert len(ps) == 400 and len({p.pid for p in ps}) == 400
    assert all(cfg.start_date <= p.modified_at <= cfg.end_date for p in ps)
    lengths = Counter(len(p.tracks) for p in ps)
    assert max(lengths) <= cfg.max_tracks
    # a small catalogue can run short of same-genre tracks, but most playlists reach the minimum
    assert min(lengths) >= 1
    assert sum(c for n, c in lengths.items() if n >= cfg.min_tracks) / len(ps) > 0.9
    assert all(len({t.track_id for t in p.tracks}) == len(p.tracks) for p in ps)


def test_titles_follow_artist():
    ps = synth(SynthConfig(n_playlists=500, n_tracks=600, noise_fraction=0.0, seed=2))
    genres = set(DEFAULT_GRAMMAR["genres"])
    seen = {}
    for p in ps:
        words = set(C.tokenize_title(p.title))
        assert len(words & genres) == 1
        lead = Counter(t.artist_ids[0] for t in p.tracks).most_common(1)[0][0]
        seen.setdefault(lead, set()).update(words & genres)
    # a playlist's dominant artist always comes with the same genre word
    assert sum(len(g) == 1 for g in seen.values()) / len(seen) > 0.95


def test_most_titles_pass_the_filter():
    ps = synth(SynthConfig(n_playlists=500, n_tracks=600, seed=3))
    tags = C.TagList.from_iterable(grammar_tags(DEFAULT_GRAMMAR))
    kept, stats = C.filter_corpus(ps, C.FilterConfig(), tags)
    assert 0.85 < len(kept) / len(ps) < 1.0
    assert sum(stats.values()) > 0


def test_config_validation():
    for bad in (dict(n_playlists=0), dict(min_tracks=5, max_tracks=4), dict(zipf=0.0),
                dict(end_date=dt.date(2014, 1, 1)), dict(noise_fraction=1.0)):
        with pytest.raises(ValueError):
            SynthConfig(**bad)


def test_custom_grammar(tmp_path):
    g = {"genres": ["폴카"], "moods": ["calm"], "contexts": ["rain"], "templates": ["{mood} {genre} {context}"]}
    (tmp_path / "g.json").write_text(json.dumps(g, ensure_ascii=False), encoding="utf-8")
    grammar = load_grammar(tmp_path / "g.json")
    ps = synth(SynthConfig(n_playlists=20, n_tracks=100, noise_fraction=0.0, seed=0), grammar)
    assert {p.title for p in ps} == {"calm 폴카 rain"}
    (tmp_path / "bad.json").write_text(json.dumps({"genres": ["x"]}))
    with pytest.raises(ValueError):
        load_grammar(tmp_path / "bad.json")

import json
import unicodedata

import pytest
from hypothesis import given, settings, strategies as st

from fixtures import playlist
from playlist_titlegen import corpus as C

TAGS = C.TagList.from_iterable(["lofi", "jazz", "chill", "hip"])


# ---------------------------------------------------------------- tokens

def test_normalize_token_examples():
    assert C.normalize_token("Rock ") == "rock"
    assert C.normalize_token("힙합") == "힙합"
    assert C.normalize_token("CAFÉ") == unicodedata.normalize("NFC", "café")
    # decomposed input comes out composed
    assert C.normalize_token("CAFÉ") == "café"


def test_tokenize_title_examples():
    assert C.tokenize_title("Best  Jogging Music") == ["best", "jogging", "music"]
    assert C.tokenize_title("") == []
    assert C.tokenize_title("카페를 가득채우는 감성노래") == ["카페를", "가득채우는", "감성노래"]
    assert C.tokenize_title("a　b\tc\n") == ["a", "b", "c"]


@settings(max_examples=200, deadline=None)
@given(st.text())
def test_tokens_have_no_whitespace(title):
    for tok in C.tokenize_title(title):
        assert tok
        assert not any(ch.isspace() for ch in tok)


# ---------------------------------------------------------------- filter

def test_filter_examples():
    cfg = C.FilterConfig()
    tags = C.TagList.from_iterable(["lofi"])
    assert C.passes_filter(playlist("p", "lofi beats to study", n_tracks=5), cfg, tags) == (True, None)
    assert C.passes_filter(playlist("p", "my favorites"), cfg, tags) == (False, 1)
    hip = C.TagList.from_iterable(["hip"])
    assert C.passes_filter(playlist("p", "chill hip hop mix", n_tracks=1), cfg, hip) == (False, 3)


def test_each_criterion_reported_first():
    cfg = C.FilterConfig()
    assert C.passes_filter(playlist("p", "a b"), cfg, TAGS).criterion == 1
    assert C.passes_filter(playlist("p", "a b c"), cfg, TAGS).criterion == 2
    assert C.passes_filter(playlist("p", "lofi jazz chill", n_tracks=1), cfg, TAGS).criterion == 3
    assert C.passes_filter(playlist("p", "songs for driving"), cfg, TAGS).criterion == 4
    # title failing (i) and (iii) reports (i)
    assert C.passes_filter(playlist("p", "x", n_tracks=1), cfg, TAGS).criterion == 1


def test_mean_char_length_counts_scalars():
    # three Hangul syllables of length 1 average below 2
    cfg = C.FilterConfig()
    assert C.passes_filter(playlist("p", "가 나 다"), cfg, TAGS).criterion == 2
    assert C.passes_filter(playlist("p", "가나 다라 lofi"), cfg, TAGS).passed


def test_tag_match_modes():
    p = playlist("p", "lofihop beats tonight")
    assert C.passes_filter(p, C.FilterConfig(), TAGS).criterion == 4
    assert C.passes_filter(p, C.FilterConfig(tag_match_mode="substring"), TAGS).passed


def test_filter_corpus_stats_and_order():
    ps = [playlist("a", "lofi beats to study"), playlist("b", "my mix"), playlist("c", "chill jazz night"),
          playlist("d", "x y z"), playlist("e", "songs for driving"), playlist("f", "lofi lofi lofi", n_tracks=1)]
    kept, stats = C.filter_corpus(ps, C.FilterConfig(), TAGS)
    assert [p.pid for p in kept] == ["a", "c"]
    assert dict(stats) == {"min_title_tokens": 1, "min_avg_char_len": 1, "min_tracks": 1, "tag_match": 1}
    assert sum(stats.values()) + len(kept) == len(ps)
    again, stats2 = C.filter_corpus(kept, C.FilterConfig(), TAGS)
    assert again == kept and sum(stats2.values()) == 0


WORDS = st.sampled_from(["lofi", "jazz", "a", "bb", "chill", "hip", "hop", "x", "music", "가"])


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.lists(WORDS, max_size=5), st.integers(0, 4)), max_size=12), st.permutations(
    ["lofi", "jazz", "chill", "hip"]))
def test_filter_properties(raw, tag_order):
    ps = [playlist(f"p{i}", " ".join(words), n_tracks=n) for i, (words, n) in enumerate(raw)]
    tags = C.TagList.from_iterable(tag_order)
    cfg = C.FilterConfig()
    kept, stats = C.filter_corpus(ps, cfg, tags)
    assert sum(stats.values()) + len(kept) == len(ps)
    assert C.filter_corpus(kept, cfg, tags)[0] == kept
    for p in kept:
        toks = C.tokenize_title(p.title)
        assert len(toks) >= 3
        assert sum(map(len, toks)) / len(toks) >= 2
        assert len(p.tracks) >= 2
    for p in ps:
        assert C.passes_filter(p, cfg, tags) == C.passes_filter(p, cfg, TAGS)


def test_config_validation():
    with pytest.raises(ValueError):
        C.FilterConfig(min_title_tokens=0)
    with pytest.raises(ValueError):
        C.FilterConfig(min_avg_char_len=0.5)
    with pytest.raises(ValueError):
        C.FilterConfig(tag_match_mode="regex")
    with pytest.raises(ValueError):
        C.TagList.from_iterable([" ", ""])


def test_tag_file_round_trip(tmp_path):
    path = tmp_path / "tags.txt"
    path.write_text("# english tags\nRock\n\nLo-Fi \nrock\n", encoding="utf-8")
    tags = C.load_tags(path, "en")
    assert tags.tags == {"rock", "lo-fi"}
    C.write_tags(tags.tags, tmp_path / "out.txt")
    assert C.load_tags(tmp_path / "out.txt").tags == tags.tags


# ---------------------------------------------------------------- ingest

def test_jsonl_example(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"pid":"p1","title":"lofi beats to study","modified_at":"2019-03-01",'
                    '"tracks":[{"track_id":"t1","artist_ids":["a1"]}]}\n', encoding="utf-8")
    [p] = C.ingest(path)
    assert p.pid == "p1" and len(p.tracks) == 1 and p.modified_at.isoformat() == "2019-03-01"
    assert p.tracks[0] == C.TrackRef("t1", ("a1",))


def test_empty_file(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("")
    assert C.ingest(path) == []


def test_missing_title(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"pid":"p1","modified_at":"2019-03-01","tracks":[]}\n')
    with pytest.raises(C.MissingField) as e:
        C.ingest(path)
    assert e.value.field == "title" and e.value.line == 1


@pytest.mark.parametrize("raw", ["2019-13-01", "March 1", "2019-3-1", 20190301])
def test_bad_dates_report_raw_value(tmp_path, raw):
    path = tmp_path / "c.jsonl"
    rec = {"pid": "p1", "title": "t", "modified_at": raw, "tracks": []}
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(C.DateParseError) as e:
        C.ingest(path)
    assert repr(raw) in str(e.value) or str(raw) in str(e.value)


def test_malformed_records(tmp_path):
    path = tmp_path / "c.jsonl"
    good = playlist("p1", "a b c").to_dict()
    path.write_text(json.dumps(good) + "\n{not json\n")
    with pytest.raises(C.MalformedRecord) as e:
        C.ingest(path)
    assert e.value.line == 2
    path.write_text(json.dumps(good) + "\n" + json.dumps(good) + "\n")
    with pytest.raises(C.MalformedRecord):
        C.ingest(path)
    bad = dict(good, tracks=[{"track_id": "t", "artist_ids": []}])
    path.write_text(json.dumps(bad) + "\n")
    with pytest.raises(C.MalformedRecord) as e:
        C.ingest(path)
    assert e.value.field == "artist_ids"


def test_missing_file_and_unknown_format(tmp_path):
    with pytest.raises(FileNotFoundError):
        C.ingest(tmp_path / "nope.jsonl")
    (tmp_path / "x").write_text("")
    with pytest.raises(C.CorpusError):
        C.ingest(tmp_path / "x", "csv")


def test_jsonl_round_trip_preserves_track_order(tmp_path):
    ps = [playlist("p1", "Chill Café mix", track_ids=["t9", "t1", "t5"], artists=["a", ("b", "c"), "a"]),
          playlist("p2", "힙합 모음", date="2020-02-29")]
    C.write_jsonl(ps, tmp_path / "c.jsonl")
    assert C.ingest(tmp_path / "c.jsonl") == ps
    assert "Café" in (tmp_path / "c.jsonl").read_text(encoding="utf-8")


def test_melon_adapter(tmp_path):
    meta = [{"id": 10, "artist_id_basket": [1, 2]}, {"id": 11, "artist_id_basket": [3]}]
    lists = [{"id": 7, "plylst_title": "비 오는 날 감성", "updt_date": "2020-01-02 11:22:33.000", "songs": [11, 10]}]
    (tmp_path / "meta.json").write_text(json.dumps(meta))
    (tmp_path / "train.json").write_text(json.dumps(lists, ensure_ascii=False), encoding="utf-8")
    [p] = C.ingest(tmp_path / "train.json", "melon", song_meta=tmp_path / "meta.json")
    assert p.pid == "7" and p.modified_at.isoformat() == "2020-01-02"
    assert p.tracks == (C.TrackRef("11", ("3",)), C.TrackRef("10", ("1", "2")))
    with pytest.raises(C.CorpusError):
        C.ingest(tmp_path / "train.json", "melon")


def test_melon_mapping_override(tmp_path):
    meta = [{"song": 1, "artists": [5]}]
    lists = [{"id": 1, "plylst_title": "t", "updt_date": "2020-01-02", "songs": [1]}]
    (tmp_path / "meta.json").write_text(json.dumps(meta))
    (tmp_path / "train.json").write_text(json.dumps(lists))
    (tmp_path / "map.json").write_text(json.dumps({"song_id": "song", "song_artists": "artists"}))
    [p] = C.ingest(tmp_path / "train.json", "melon", song_meta=tmp_path / "meta.json", mapping=tmp_path / "map.json")
    assert p.tracks[0].artist_ids == ("5",)
    with pytest.raises(C.CorpusError):
        C.ingest(tmp_path / "train.json", "melon", song_meta=tmp_path / "meta.json", mapping={"bogus": "x"})


def test_melon_unknown_song(tmp_path):
    (tmp_path / "meta.json").write_text("[]")
    (tmp_path / "train.json").write_text(json.dumps([{"id": 1, "plylst_title": "t", "updt_date": "2020-01-02",
                                                       "songs": [4]}]))
    with pytest.raises(C.MalformedRecord) as e:
        C.ingest(tmp_path / "train.json", "melon", song_meta=tmp_path / "meta.json")
    assert e.value.line == 0


def test_mpd_adapter(tmp_path):
    data = {"info": {}, "playlists": [{"pid": 3, "name": "Throwbacks", "modified_at": 1493424000,
                                       "tracks": [{"track_uri": "spotify:track:x", "artist_uri": "spotify:artist:y"}]}]}
    (tmp_path / "slice.json").write_text(json.dumps(data))
    [p] = C.ingest(tmp_path / "slice.json", "mpd-slice")
    assert p.pid == "3" and p.title == "Throwbacks"
    assert p.modified_at.isoformat() == "2017-04-29"
    assert p.tracks == (C.TrackRef("spotify:track:x", ("spotify:artist:y",)),)
    data["playlists"][0]["modified_at"] = "yesterday"
    (tmp_path / "slice.json").write_text(json.dumps(data))
    with pytest.raises(C.DateParseError):
        C.ingest(tmp_path / "slice.json", "mpd-slice")


def test_trackref_validation():
    with pytest.raises(ValueError):
        C.TrackRef("", ("a",))
    with pytest.raises(ValueError):
        C.TrackRef("t", ())

"""Playlist records, dataset adapters and the title/track noise filters."""
import datetime as dt
import json
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

FORMATS = ("normalized-jsonl", "melon", "mpd-slice")

# criterion order used for rejection stats and first-failure reporting
CRITERIA = ("min_title_tokens", "min_avg_char_len", "min_tracks", "tag_match")


class CorpusError(ValueError):
    pass


class MalformedRecord(CorpusError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class MissingField(MalformedRecord):
    def __init__(self, field, line=None):
        super().__init__(f"missing field {field!r}", line=line, field=field)


class DateParseError(CorpusError):
    def __init__(self, raw, line=None):
        self.raw = raw
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}unparseable date {raw!r}")


@dataclass(frozen=True)
class TrackRef:
    track_id: str
    artist_ids: tuple

    def __post_init__(self):
        if not isinstance(self.track_id, str) or not self.track_id:
            raise ValueError("track_id must be a non-empty string")
        if not self.artist_ids or any(not isinstance(a, str) or not a for a in self.artist_ids):
            raise ValueError(f"track {self.track_id!r}: artist_ids must be non-empty strings")


@dataclass(frozen=True)
class Playlist:
    pid: str
    title: str
    modified_at: dt.date
    tracks: tuple = ()

    def to_dict(self):
        return {
            "pid": self.pid,
            "title": self.title,
            "modified_at": self.modified_at.isoformat(),
            "tracks": [{"track_id": t.track_id, "artist_ids": list(t.artist_ids)} for t in self.tracks],
        }


@dataclass(frozen=True)
class TagList:
    tags: frozenset
    language: str = ""

    def __post_init__(self):
        if not self.tags:
            raise ValueError("tag list is empty")

    @classmethod
    def from_iterable(cls, raw_tags, language=""):
        tags = frozenset(t for t in (normalize_token(r) for r in raw_tags) if t)
        return cls(tags, language)


@dataclass(frozen=True)
class FilterConfig:
    min_title_tokens: int = 3
    min_avg_char_len: float = 2.0
    min_tracks: int = 2
    tag_match_mode: str = "token"

    def __post_init__(self):
        if self.min_title_tokens < 1 or self.min_tracks < 1:
            raise ValueError("min_title_tokens and min_tracks must be >= 1")
        if self.min_avg_char_len < 1.0:
            raise ValueError("min_avg_char_len must be >= 1.0")
        if self.tag_match_mode not in ("token", "substring"):
            raise ValueError(f"unknown tag_match_mode {self.tag_match_mode!r}")


class FilterDecision(NamedTuple):
    passed: bool
    criterion: int | None  # 1-based index into CRITERIA of the first failure


def normalize_token(raw):
    s = unicodedata.normalize("NFC", raw)
    s = unicodedata.normalize("NFC", s.casefold())
    return s.strip()


def tokenize_title(title):
    tokens = (normalize_token(t) for t in title.split())
    return [t for t in tokens if t]


def _tag_hit(tokens, tags, mode):
    if mode == "token":
        return any(t in tags.tags for t in tokens)
    return any(tag in tok for tok in tokens for tag in tags.tags)


def passes_filter(p, cfg, tags):
    tokens = tokenize_title(p.title)
    if len(tokens) < cfg.min_title_tokens:
        return FilterDecision(False, 1)
    if sum(len(t) for t in tokens) / len(tokens) < cfg.min_avg_char_len:
        return FilterDecision(False, 2)
    if len(p.tracks) < cfg.min_tracks:
        return FilterDecision(False, 3)
    if not _tag_hit(tokens, tags, cfg.tag_match_mode):
        return FilterDecision(False, 4)
    return FilterDecision(True, None)


def filter_corpus(ps, cfg, tags):
    """Keep playlists passing every criterion; count rejections by first failure."""
    kept = []
    stats = dict.fromkeys(CRITERIA, 0)
    for p in ps:
        decision = passes_filter(p, cfg, tags)
        if decision.passed:
            kept.append(p)
        else:
            stats[CRITERIA[decision.criterion - 1]] += 1
    return kept, stats


def load_tags(path, language=""):
    """Tag file: one tag per line, '#' starts a comment line."""
    raw = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                raw.append(line)
    return TagList.from_iterable(raw, language)


def write_tags(tags, path):
    with open(path, "w", encoding="utf-8") as f:
        for t in sorted(tags):
            f.write(t + "\n")


# ---------------------------------------------------------------- ingest

def parse_date(raw, line=None):
    """ISO date, or a datetime string truncated to its date part (naive = UTC)."""
    if not isinstance(raw, str):
        raise DateParseError(raw, line)
    text = raw[:10] if len(raw) > 10 and raw[10] in " T" else raw
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise DateParseError(raw, line) from None


def _epoch_to_date(raw, line=None):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise DateParseError(raw, line)
    try:
        return dt.datetime.fromtimestamp(raw, tz=dt.timezone.utc).date()
    except (OverflowError, OSError, ValueError):
        raise DateParseError(raw, line) from None


def _require(obj, key, line, name=None):
    if not isinstance(obj, dict) or key not in obj:
        raise MissingField(name or key, line)
    return obj[key]


def _make_track(track_id, artist_ids, line):
    if not isinstance(track_id, str) or not track_id:
        raise MalformedRecord("track_id must be a non-empty string", line, "track_id")
    if not isinstance(artist_ids, list) or not artist_ids or not all(isinstance(a, str) and a for a in artist_ids):
        raise MalformedRecord(f"track {track_id!r}: artist_ids must be a non-empty list of strings", line, "artist_ids")
    return TrackRef(track_id, tuple(artist_ids))


def playlist_from_dict(rec, line=None):
    pid = _require(rec, "pid", line)
    title = _require(rec, "title", line)
    date_raw = _require(rec, "modified_at", line)
    tracks_raw = _require(rec, "tracks", line)
    if not isinstance(pid, str) or not pid:
        raise MalformedRecord("pid must be a non-empty string", line, "pid")
    if not isinstance(title, str):
        raise MalformedRecord("title must be a string", line, "title")
    if not isinstance(tracks_raw, list):
        raise MalformedRecord("tracks must be an array", line, "tracks")
    tracks = []
    for t in tracks_raw:
        tracks.append(_make_track(_require(t, "track_id", line), _require(t, "artist_ids", line), line))
    if not isinstance(date_raw, str) or len(date_raw) != 10:
        raise DateParseError(date_raw, line)
    return Playlist(pid, title, parse_date(date_raw, line), tuple(tracks))


def _check_unique(ps):
    seen = set()
    for p in ps:
        if p.pid in seen:
            raise MalformedRecord(f"duplicate pid {p.pid!r}", field="pid")
        seen.add(p.pid)
    return ps


def read_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(f"invalid JSON ({e.msg} at column {e.colno})", lineno) from None
            out.append(playlist_from_dict(rec, lineno))
    return _check_unique(out)


def write_jsonl(ps, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for p in ps:
            f.write(json.dumps(p.to_dict(), ensure_ascii=False, separators=(",", ":")) + "\n")


MELON_FIELDS = {
    "pid": "id",
    "title": "plylst_title",
    "modified_at": "updt_date",
    "songs": "songs",
    "song_id": "id",
    "song_artists": "artist_id_basket",
}

MPD_FIELDS = {
    "playlists": "playlists",
    "pid": "pid",
    "title": "name",
    "modified_at": "modified_at",
    "tracks": "tracks",
    "track_id": "track_uri",
    "artist_id": "artist_uri",
}


def _load_mapping(defaults, mapping):
    fields = dict(defaults)
    if mapping is not None:
        if isinstance(mapping, (str, Path)):
            with open(mapping, encoding="utf-8") as f:
                mapping = json.load(f)
        unknown = set(mapping) - set(defaults)
        if unknown:
            raise CorpusError(f"unknown mapping keys: {sorted(unknown)}")
        fields.update(mapping)
    return fields


def _load_json(path):
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedRecord(f"invalid JSON ({e.msg} at offset {e.pos})", e.lineno) from None


def read_melon(path, song_meta, mapping=None):
    """Melon playlists JSON array joined with the song_meta sidecar for artists.

    Record indices (0-based offsets into the array) stand in for line numbers
    in error messages.
    """
    if song_meta is None:
        raise CorpusError("melon format requires a song_meta sidecar path")
    fm = _load_mapping(MELON_FIELDS, mapping)
    artists = {}
    for i, song in enumerate(_load_json(song_meta)):
        sid = _require(song, fm["song_id"], i, "song_meta." + fm["song_id"])
        basket = _require(song, fm["song_artists"], i, "song_meta." + fm["song_artists"])
        artists[str(sid)] = [str(a) for a in basket]
    data = _load_json(path)
    if not isinstance(data, list):
        raise MalformedRecord("melon playlists file must hold a JSON array", field="playlists")
    out = []
    for i, rec in enumerate(data):
        pid = str(_require(rec, fm["pid"], i, "pid"))
        title = _require(rec, fm["title"], i, "title")
        date = parse_date(_require(rec, fm["modified_at"], i, "modified_at"), i)
        tracks = []
        for sid in _require(rec, fm["songs"], i, "tracks"):
            sid = str(sid)
            if sid not in artists:
                raise MalformedRecord(f"song {sid!r} absent from song_meta", i, "tracks")
            tracks.append(_make_track(sid, artists[sid], i))
        if not isinstance(title, str):
            raise MalformedRecord("title must be a string", i, "title")
        out.append(Playlist(pid, title, date, tuple(tracks)))
    return _check_unique(out)


def read_mpd_slice(path, mapping=None):
    fm = _load_mapping(MPD_FIELDS, mapping)
    data = _load_json(path)
    records = _require(data, fm["playlists"], None, "playlists")
    out = []
    for i, rec in enumerate(records):
        pid = str(_require(rec, fm["pid"], i, "pid"))
        title = _require(rec, fm["title"], i, "title")
        if not isinstance(title, str):
            raise MalformedRecord("title must be a string", i, "title")
        date = _epoch_to_date(_require(rec, fm["modified_at"], i, "modified_at"), i)
        tracks = []
        for t in _require(rec, fm["tracks"], i, "tracks"):
            tracks.append(_make_track(_require(t, fm["track_id"], i, "track_id"),
                                      [_require(t, fm["artist_id"], i, "artist_ids")], i))
        out.append(Playlist(pid, title, date, tuple(tracks)))
    return _check_unique(out)


def ingest(path, format="normalized-jsonl", song_meta=None, mapping=None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(2, "no such file", str(path))
    if format == "normalized-jsonl":
        return read_jsonl(path)
    if format == "melon":
        return read_melon(path, song_meta, mapping)
    if format == "mpd-slice":
        return read_mpd_slice(path, mapping)
    raise CorpusError(f"unknown format {format!r}; expected one of {FORMATS}")

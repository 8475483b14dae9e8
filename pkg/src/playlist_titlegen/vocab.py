"""Input (track/artist ID) and output (title word) vocabularies plus encoding."""
import hashlib
from collections import Counter
from dataclasses import dataclass

from .corpus import tokenize_title

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIALS = ("<pad>", "<unk>", "<bos>", "<eos>")
INPUT_MODES = ("track", "artist")


class VocabError(ValueError):
    pass


class Vocab:
    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:4]) != SPECIALS:
            raise VocabError("vocab must start with the four special tokens")
        self.index_to_token = tokens
        self.token_to_index = {t: i for i, t in enumerate(tokens)}
        if len(self.token_to_index) != len(tokens):
            raise VocabError("duplicate tokens in vocab")

    def __len__(self):
        return len(self.index_to_token)

    def __contains__(self, token):
        return token in self.token_to_index

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.index_to_token == other.index_to_token

    def index(self, token):
        return self.token_to_index.get(token, UNK)

    def token(self, index):
        return self.index_to_token[index]

    def to_text(self):
        return "".join(t + "\n" for t in self.index_to_token)

    def sha256(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8", newline="\n") as f:
            text = f.read()
        if not text.endswith("\n"):
            raise VocabError(f"{path}: vocab file must end with a newline")
        return cls(text[:-1].split("\n"))


def _from_counts(counts, min_count):
    kept = [(tok, c) for tok, c in counts.items() if c >= min_count]
    for tok, _ in kept:
        if not tok or any(ch in tok for ch in "\n\r") or tok in SPECIALS:
            raise VocabError(f"token {tok!r} cannot be stored in a vocab file")
    if not kept:
        raise VocabError(f"empty vocabulary at min_count={min_count}")
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    return Vocab(list(SPECIALS) + [t for t, _ in kept])


def input_tokens(p, mode):
    if mode == "track":
        return [t.track_id for t in p.tracks]
    if mode == "artist":
        return [a for t in p.tracks for a in t.artist_ids]
    raise VocabError(f"unknown input mode {mode!r}")


def build_input_vocab(train, mode, min_count=1):
    if not train:
        raise VocabError("cannot build a vocab from an empty train split")
    counts = Counter()
    for p in train:
        counts.update(input_tokens(p, mode))
    return _from_counts(counts, min_count)


def build_output_vocab(train, min_count=1):
    if not train:
        raise VocabError("cannot build a vocab from an empty train split")
    counts = Counter()
    for p in train:
        counts.update(tokenize_title(p.title))
    return _from_counts(counts, min_count)


@dataclass(frozen=True)
class EncodedExample:
    pid: str
    input_ids: tuple
    target_ids: tuple


def encode(p, in_vocab, out_vocab, mode, max_input_len=128, max_title_len=16):
    if max_title_len < 2:
        raise ValueError("max_title_len must leave room for BOS and EOS")
    inputs = [in_vocab.index(t) for t in input_tokens(p, mode)[:max_input_len]]
    words = [out_vocab.index(w) for w in tokenize_title(p.title)[:max_title_len - 2]]
    return EncodedExample(p.pid, tuple(inputs), (BOS, *words, EOS))


def decode_title(ids, out_vocab):
    return [out_vocab.token(i) for i in ids if i not in (PAD, BOS, EOS)]


def unk_proportion(examples):
    """UNK occurrences over all input token occurrences."""
    total = sum(len(e.input_ids) for e in examples)
    if total == 0:
        raise ValueError("no input tokens")
    return sum(e.input_ids.count(UNK) for e in examples) / total

"""Greedy and beam-search title decoding.

A decodable model exposes ``start(input_ids) -> state`` and
``next_logits(state, prefixes) -> (k, V) array``; ``Seq2SeqModel`` does.
"""
import json
from dataclasses import dataclass

import numpy as np

from .vocab import BOS, EOS, PAD, UNK

# never emitted as title words
_BLOCKED = (PAD, UNK, BOS)


@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = "greedy"
    beam_width: int = 4
    max_len: int = 16
    length_penalty: float = 0.0

    def __post_init__(self):
        if self.strategy not in ("greedy", "beam"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.beam_width < 1 or self.max_len < 1:
            raise ValueError("beam_width and max_len must be >= 1")
        if self.length_penalty < 0:
            raise ValueError("length_penalty must be >= 0")


@dataclass(frozen=True)
class GeneratedTitle:
    token_ids: tuple
    score: float


def _log_softmax(logits):
    x = logits - logits.max(axis=-1, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=-1, keepdims=True))


def _allowed(logp):
    out = logp.copy()
    out[..., list(_BLOCKED)] = -np.inf
    return out


def greedy(model, input_ids, max_len=16):
    state = model.start(input_ids)
    prefix = [BOS]
    words = []
    score = 0.0
    while len(words) < max_len:
        logp = _log_softmax(model.next_logits(state, [prefix])[0].astype(np.float64))
        tok = int(np.argmax(_allowed(logp)))  # argmax returns the lowest index on ties
        score += float(logp[tok])
        if tok == EOS:
            break
        words.append(tok)
        prefix.append(tok)
    return GeneratedTitle(tuple(words), score)


def _normalized(score, n_tokens, penalty):
    if penalty == 0:
        return score
    return score / max(n_tokens, 1) ** penalty


def beam_search(model, input_ids, beam_width=4, max_len=16, length_penalty=0.0):
    state = model.start(input_ids)
    alive = [((), 0.0)]          # (words, summed log-prob)
    finished = []                # (normalized score, words, raw score)
    while alive:
        prefixes = [[BOS, *w] for w, _ in alive]
        logp = _allowed(_log_softmax(model.next_logits(state, prefixes).astype(np.float64)))
        cands = []  # (words, score, done, n_scored_tokens, tie_key)
        for (words, score), row in zip(alive, logp):
            for tok in np.flatnonzero(np.isfinite(row)):
                tok = int(tok)
                s = score + float(row[tok])
                if tok == EOS:
                    cands.append((words, s, True, len(words) + 1, (*words, EOS)))
                else:
                    new = (*words, tok)
                    cands.append((new, s, len(new) >= max_len, len(new), new))
        # EOS hypotheses compete with open prefixes for the top slots
        cands.sort(key=lambda c: (-c[1], c[4]))
        for words, s, done, n, _ in cands[:beam_width]:
            if done:
                finished.append((_normalized(s, n, length_penalty), words, s))
        alive = [(c[0], c[1]) for c in cands if not c[2]][:beam_width]
        if alive and finished and length_penalty == 0:
            # summed log-probs only fall as prefixes grow
            if max(f[0] for f in finished) >= alive[0][1]:
                break
    finished.sort(key=lambda f: (-f[0], f[1]))
    norm, words, raw = finished[0]
    return GeneratedTitle(tuple(words), norm if length_penalty > 0 else raw)


def generate(model, cfg, input_ids):
    if cfg.strategy == "greedy":
        return greedy(model, input_ids, cfg.max_len)
    return beam_search(model, input_ids, cfg.beam_width, cfg.max_len, cfg.length_penalty)


def write_generations(rows, path):
    """rows: iterable of (pid, title_tokens, score) -> JSONL."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for pid, tokens, score in rows:
            f.write(json.dumps({"pid": pid, "title_tokens": list(tokens), "score": score},
                               ensure_ascii=False, separators=(",", ":")) + "\n")


def read_generations(path):
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                out.append((rec["pid"], rec["title_tokens"], rec["score"]))
    return out

"""Title evaluation: n-gram overlap, embedding similarity, diversity, and
per-frequency-bucket reporting."""
import csv
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .kernels import meteor_alignment
from .splitter import BUCKETS, quartile_buckets


@dataclass(frozen=True)
class EvalPair:
    pid: str
    reference: tuple
    candidate: tuple

    def __post_init__(self):
        if not self.reference:
            raise ValueError(f"pair {self.pid!r}: empty reference")
        for tok in (*self.reference, *self.candidate):
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"pair {self.pid!r}: token {tok!r} is empty or contains whitespace")


def ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _clipped_matches(ref, cand, n):
    rc = Counter(ngrams(ref, n))
    cc = Counter(ngrams(cand, n))
    return sum((cc & rc).values())


# ---------------------------------------------------------------- n-gram overlap

def bleu_n(pairs, n, smooth=False):
    """Corpus BLEU up to order n with brevity penalty.

    With ``smooth`` orders above 1 get add-one smoothing on both counts.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    cand_len = sum(len(p.candidate) for p in pairs)
    if not pairs or cand_len == 0:
        raise ValueError("BLEU of an empty candidate corpus")
    ref_len = sum(len(p.reference) for p in pairs)
    log_sum = 0.0
    for k in range(1, n + 1):
        matches = sum(_clipped_matches(p.reference, p.candidate, k) for p in pairs)
        total = sum(max(len(p.candidate) - k + 1, 0) for p in pairs)
        if smooth and k > 1:
            matches, total = matches + 1, total + 1
        if matches == 0:
            return 0.0
        log_sum += math.log(matches / total)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_sum / n)


def rouge_n_pair(ref, cand, n):
    matches = _clipped_matches(ref, cand, n)
    n_cand = max(len(cand) - n + 1, 0)
    n_ref = max(len(ref) - n + 1, 0)
    p = matches / n_cand if n_cand else 0.0
    r = matches / n_ref if n_ref else 0.0
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def rouge_n_f1(pairs, n):
    if n < 1:
        raise ValueError("n must be >= 1")
    if not pairs:
        raise ValueError("ROUGE of an empty corpus")
    return sum(rouge_n_pair(p.reference, p.candidate, n) for p in pairs) / len(pairs)


def meteor_pair(ref, cand):
    ids = {}
    r = [ids.setdefault(t, len(ids)) for t in ref]
    c = [ids.setdefault(t, len(ids)) for t in cand]
    m, chunks = meteor_alignment(r, c)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    fmean = 10 * precision * recall / (recall + 9 * precision)
    return fmean * (1.0 - 0.5 * (chunks / m) ** 3)


def meteor(pairs):
    if not pairs:
        raise ValueError("METEOR of an empty corpus")
    return sum(meteor_pair(p.reference, p.candidate) for p in pairs) / len(pairs)


# ---------------------------------------------------------------- diversity

def distinct_n(candidates, n):
    """Distinct n-grams over all n-grams, pooled across the whole corpus."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pooled = [g for c in candidates for g in ngrams(list(c), n)]
    if not pooled:
        raise ValueError(f"no {n}-grams in the candidate corpus")
    return len(set(pooled)) / len(pooled)


# ---------------------------------------------------------------- embedding metrics

def _unit_rows(emb):
    emb = np.asarray(emb, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] == 0 or emb.shape[1] == 0:
        raise ValueError("embeddings must be a non-empty 2-D array")
    if not np.all(np.isfinite(emb)):
        raise ValueError("embeddings must be finite")
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm embedding vector")
    return emb / norms


def bert_score_f1(ref_emb, cand_emb):
    ref = _unit_rows(ref_emb)
    cand = _unit_rows(cand_emb)
    if ref.shape[1] != cand.shape[1]:
        raise ValueError("embedding dimensions differ")
    sim = ref @ cand.T
    recall = sim.max(axis=1).mean()
    precision = sim.max(axis=0).mean()
    if precision + recall <= 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def sentence_cosine(ref_emb, cand_emb):
    ref = np.asarray(ref_emb, dtype=np.float64).mean(axis=0)
    cand = np.asarray(cand_emb, dtype=np.float64).mean(axis=0)
    if ref.shape != cand.shape:
        raise ValueError("embedding dimensions differ")
    nr, nc = np.linalg.norm(ref), np.linalg.norm(cand)
    if nr == 0 or nc == 0:
        raise ValueError("zero-norm mean embedding")
    return float(ref @ cand / (nr * nc))


# ---------------------------------------------------------------- report

def _or_none(fn, *args):
    try:
        return fn(*args)
    except ValueError:
        return None


def metric_block(pairs, embeddings=None, nll=None):
    out = {
        "n_pairs": len(pairs),
        "bleu_1": _or_none(bleu_n, pairs, 1),
        "bleu_2": _or_none(bleu_n, pairs, 2),
        "rouge_1": rouge_n_f1(pairs, 1),
        "rouge_2": rouge_n_f1(pairs, 2),
        "meteor": meteor(pairs),
    }
    cands = [p.candidate for p in pairs]
    for n in (1, 2, 3):
        out[f"distinct_{n}"] = _or_none(distinct_n, cands, n)
    if embeddings is not None:
        out["bert_score"] = float(np.mean([bert_score_f1(*embeddings[p.pid]) for p in pairs]))
        out["sentbert"] = float(np.mean([sentence_cosine(*embeddings[p.pid]) for p in pairs]))
    if nll is not None:
        out["nll"] = float(np.mean([nll[p.pid] for p in pairs]))
    return out


def evaluate(pairs, stats=None, embeddings=None, nll=None):
    """Corpus metrics, per-pair metrics and, given F_t/F_a stats, quartile breakdowns.

    ``stats``: pid -> FrequencyStats; ``embeddings``: pid -> (ref, cand) arrays;
    ``nll``: pid -> per-pair NLL.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("nothing to evaluate")
    for name, table in (("embeddings", embeddings), ("nll", nll)):
        if table is not None:
            missing = [p.pid for p in pairs if p.pid not in table]
            if missing:
                raise KeyError(f"{name} missing for pids: {missing}")
    report = {"corpus": metric_block(pairs, embeddings, nll)}
    per_pair = []
    for p in pairs:
        row = {
            "pid": p.pid,
            "bleu_1": _or_none(bleu_n, [p], 1),
            "rouge_1": rouge_n_pair(p.reference, p.candidate, 1),
            "rouge_2": rouge_n_pair(p.reference, p.candidate, 2),
            "meteor": meteor_pair(p.reference, p.candidate),
        }
        if embeddings is not None:
            row["bert_score"] = bert_score_f1(*embeddings[p.pid])
            row["sentbert"] = sentence_cosine(*embeddings[p.pid])
        if nll is not None:
            row["nll"] = float(nll[p.pid])
        per_pair.append(row)

    if stats is not None:
        missing = [p.pid for p in pairs if p.pid not in stats]
        if missing:
            raise KeyError(f"frequency stats missing for pids: {missing}")
        for key, attr in (("ft", "f_t"), ("fa", "f_a")):
            buckets = quartile_buckets([(p.pid, getattr(stats[p.pid], attr)) for p in pairs])
            section = {}
            for b in BUCKETS:
                subset = [p for p in pairs if buckets[p.pid] == b]
                section[b] = metric_block(subset, embeddings, nll)
            report[f"by_bucket_{key}"] = section
            for row in per_pair:
                row[attr] = getattr(stats[row["pid"]], attr)
                row[f"bucket_{key}"] = buckets[row["pid"]]
    report["per_pair"] = per_pair
    return report


def write_report(report, json_path, csv_path=None):
    with open(json_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(report, f, indent=1, ensure_ascii=False)
        f.write("\n")
    if csv_path is not None:
        rows = report["per_pair"]
        fields = list(rows[0].keys()) if rows else ["pid"]
        with open(csv_path, "w", encoding="utf-8", newline="") as f:
            w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


# ---------------------------------------------------------------- file formats

def read_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                pairs.append(EvalPair(str(rec["pid"]), tuple(rec["reference"]), tuple(rec["candidate"])))
            except KeyError as e:
                raise ValueError(f"line {lineno}: missing field {e.args[0]!r}") from None
    return pairs


def write_pairs(pairs, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for p in pairs:
            f.write(json.dumps({"pid": p.pid, "reference": list(p.reference), "candidate": list(p.candidate)},
                               ensure_ascii=False, separators=(",", ":")) + "\n")


def read_embeddings(path):
    """Embedding file records::

        > <pid> <dim>
        <reference token rows>
        <blank line>
        <candidate token rows>

    Returns pid -> (ref array, cand array).
    """
    out = {}
    pid = dim = None
    blocks = None

    def close():
        if pid is None:
            return
        if len(blocks) != 2 or not blocks[0] or not blocks[1]:
            raise ValueError(f"embedding record {pid!r}: need reference rows, a blank line, candidate rows")
        out[pid] = (np.array(blocks[0], dtype=np.float64), np.array(blocks[1], dtype=np.float64))

    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if line.startswith(">"):
                close()
                head = line[1:].strip().rsplit(None, 1)
                if len(head) != 2:
                    raise ValueError(f"line {lineno}: header must be '> pid dim'")
                pid, dim = head[0], int(head[1])
                blocks = [[]]
            elif not line:
                if blocks is not None and blocks[-1] and len(blocks) < 2:
                    blocks.append([])
            else:
                if blocks is None:
                    raise ValueError(f"line {lineno}: vector before any header")
                row = [float(x) for x in line.split()]
                if len(row) != dim:
                    raise ValueError(f"line {lineno}: expected {dim} values, got {len(row)}")
                blocks[-1].append(row)
    close()
    return out


def write_embeddings(table, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for pid, (ref, cand) in table.items():
            ref = np.asarray(ref)
            f.write(f"> {pid} {ref.shape[1]}\n")
            for row in ref:
                f.write(" ".join(repr(float(x)) for x in row) + "\n")
            f.write("\n")
            for row in np.asarray(cand):
                f.write(" ".join(repr(float(x)) for x in row) + "\n")
            f.write("\n")

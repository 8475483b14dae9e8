"""Brute-force reference implementations, written without the library's helpers.

Slow on purpose: plain loops, exhaustive alignment enumeration.
"""
import itertools
import math


def grams(tokens, n):
    out = []
    for i in range(len(tokens) - n + 1):
        out.append(tuple(tokens[i:i + n]))
    return out


def clipped(ref, cand, n):
    """Greedy one-to-one matching of candidate n-grams against unused reference n-grams."""
    pool = grams(ref, n)
    used = [False] * len(pool)
    hits = 0
    for g in grams(cand, n):
        for j, r in enumerate(pool):
            if not used[j] and r == g:
                used[j] = True
                hits += 1
                break
    return hits


def bleu(pairs, n, smooth=False):
    c = sum(len(cand) for _, cand in pairs)
    r = sum(len(ref) for ref, _ in pairs)
    logp = 0.0
    for k in range(1, n + 1):
        hit = sum(clipped(ref, cand, k) for ref, cand in pairs)
        tot = sum(len(grams(cand, k)) for _, cand in pairs)
        if smooth and k > 1:
            hit += 1
            tot += 1
        if hit == 0:
            return 0.0
        logp += math.log(hit) - math.log(tot)
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return bp * math.exp(logp / n)


def rouge(ref, cand, n):
    hit = clipped(ref, cand, n)
    nc = len(grams(cand, n))
    nr = len(grams(ref, n))
    if hit == 0:
        return 0.0
    p = hit / nc
    rc = hit / nr
    return 2 * p * rc / (p + rc)


def _alignments(ref, cand):
    """Every maximum-size one-to-one exact alignment, as sorted (cand_pos, ref_pos) lists."""
    per_token = []
    for tok in sorted(set(ref) & set(cand)):
        cpos = [i for i, t in enumerate(cand) if t == tok]
        rpos = [j for j, t in enumerate(ref) if t == tok]
        k = min(len(cpos), len(rpos))
        options = []
        for cs in itertools.combinations(cpos, k):
            for rs in itertools.permutations(rpos, k):
                options.append(list(zip(cs, rs)))
        per_token.append(options)
    for combo in itertools.product(*per_token):
        yield sorted(p for part in combo for p in part)


def _chunks(alignment):
    chunks = 0
    prev = None
    for c, r in alignment:
        if prev is None or not (c == prev[0] + 1 and r == prev[1] + 1):
            chunks += 1
        prev = (c, r)
    return chunks


def meteor(ref, cand):
    best = None
    m = 0
    for al in _alignments(ref, cand):
        m = len(al)
        ch = _chunks(al)
        best = ch if best is None else min(best, ch)
    if m == 0:
        return 0.0
    p = m / len(cand)
    r = m / len(ref)
    f = 10 * p * r / (r + 9 * p)
    return f * (1 - 0.5 * (best / m) ** 3)


def distinct(cands, n):
    seen = []
    total = 0
    for c in cands:
        for g in grams(c, n):
            total += 1
            if g not in seen:
                seen.append(g)
    return len(seen) / total


def _cos(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return dot / (nu * nv)


def bert_f1(ref_rows, cand_rows):
    rec = sum(max(_cos(r, c) for c in cand_rows) for r in ref_rows) / len(ref_rows)
    prec = sum(max(_cos(r, c) for r in ref_rows) for c in cand_rows) / len(cand_rows)
    if prec + rec <= 0:
        return 0.0
    return 2 * prec * rec / (prec + rec)


def sent_cos(ref_rows, cand_rows):
    d = len(ref_rows[0])
    mr = [sum(row[j] for row in ref_rows) / len(ref_rows) for j in range(d)]
    mc = [sum(row[j] for row in cand_rows) / len(cand_rows) for j in range(d)]
    return _cos(mr, mc)


# ---------------------------------------------------------------- transformer, one float at a time

def _vec_mat(x, w, b):
    return [sum(x[i] * w[i][j] for i in range(len(x))) + b[j] for j in range(len(b))]


def _layer_norm(x, g, b, eps=1e-6):
    mu = sum(x) / len(x)
    var = sum((v - mu) ** 2 for v in x) / len(x)
    return [(v - mu) / math.sqrt(var + eps) * g[i] + b[i] for i, v in enumerate(x)]


def _attend(P, prefix, queries, keys, n_heads, causal):
    d = len(queries[0])
    dh = d // n_heads
    q = [_vec_mat(x, P[prefix + ".q.w"], P[prefix + ".q.b"]) for x in queries]
    k = [_vec_mat(x, P[prefix + ".k.w"], P[prefix + ".k.b"]) for x in keys]
    v = [_vec_mat(x, P[prefix + ".v.w"], P[prefix + ".v.b"]) for x in keys]
    out = []
    for i in range(len(queries)):
        ctx = [0.0] * d
        for h in range(n_heads):
            sl = range(h * dh, (h + 1) * dh)
            visible = range(i + 1) if causal else range(len(keys))
            scores = [sum(q[i][c] * k[j][c] for c in sl) / math.sqrt(dh) for j in visible]
            top = max(scores)
            ex = [math.exp(s - top) for s in scores]
            tot = sum(ex)
            for w, j in zip(ex, visible):
                for c in sl:
                    ctx[c] += w / tot * v[j][c]
        out.append(_vec_mat(ctx, P[prefix + ".o.w"], P[prefix + ".o.b"]))
    return out


def _ffn(P, prefix, x):
    hidden = [max(0.0, u) for u in _vec_mat(x, P[prefix + ".ff1.w"], P[prefix + ".ff1.b"])]
    return _vec_mat(hidden, P[prefix + ".ff2.w"], P[prefix + ".ff2.b"])


def _add_norm(P, prefix, xs, ys):
    return [_layer_norm([a + b for a, b in zip(x, y)], P[prefix + ".g"], P[prefix + ".b"]) for x, y in zip(xs, ys)]


def transformer_logits(params, n_heads, n_enc, n_dec, input_ids, prefix):
    """Post-norm encoder-decoder logits for the last prefix position; params as nested lists."""
    P = {k: v.tolist() for k, v in params.items()}
    d = len(P["enc.embed"][0])
    x = [P["enc.embed"][t] for t in input_ids]
    for l in range(n_enc):
        x = _add_norm(P, f"enc.{l}.ln1", x, _attend(P, f"enc.{l}.self", x, x, n_heads, False))
        x = _add_norm(P, f"enc.{l}.ln2", x, [_ffn(P, f"enc.{l}", r) for r in x])
    y = []
    for pos, t in enumerate(prefix):
        pe = [math.sin(pos / 10000 ** (2 * (i // 2) / d)) if i % 2 == 0 else math.cos(pos / 10000 ** (2 * (i // 2) / d))
              for i in range(d)]
        y.append([e + p for e, p in zip(P["dec.embed"][t], pe)])
    for l in range(n_dec):
        y = _add_norm(P, f"dec.{l}.ln1", y, _attend(P, f"dec.{l}.self", y, y, n_heads, True))
        y = _add_norm(P, f"dec.{l}.ln2", y, _attend(P, f"dec.{l}.cross", y, x, n_heads, False))
        y = _add_norm(P, f"dec.{l}.ln3", y, [_ffn(P, f"dec.{l}", r) for r in y])
    return _vec_mat(y[-1], P["out.w"], P["out.b"])


def adam_reference(theta, grads, lr, b1, b2, eps, wd):
    """Hand-stepped decoupled-decay Adam over a list of gradients for one scalar."""
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * wd * theta
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
    return theta


def _relu_signs(model, batch):
    """Loss plus the sign pattern of every ReLU input seen while computing it."""
    from playlist_titlegen import autograd as ag

    seen = []
    original = ag.relu

    def recording(a):
        seen.append(a.data > 0)
        return original(a)

    ag.relu = recording
    try:
        loss = float(model.loss(batch).data)
    finally:
        ag.relu = original
    return loss, seen


def finite_difference_grads(model, batch, eps=1e-4, fallback_eps=1e-6):
    """Central differences of the eval-mode loss for every parameter entry.

    A step that flips any ReLU input sign straddles a kink, where the central
    difference is not a derivative estimate; such entries are re-differenced
    with ``fallback_eps``. Returns (grads, n_refined).
    """
    _, base = _relu_signs(model, batch)
    out = {}
    refined = 0
    for name, t in model.params.items():
        g = [0.0] * t.data.size
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            h = eps
            while True:
                flat[i] = keep + h
                up, s_up = _relu_signs(model, batch)
                flat[i] = keep - h
                down, s_down = _relu_signs(model, batch)
                flat[i] = keep
                crossed = any((a != b).any() for a, b in zip(s_up, base)) or \
                    any((a != b).any() for a, b in zip(s_down, base))
                if not crossed or h <= fallback_eps:
                    break
                h = fallback_eps
                refined += 1
            g[i] = (up - down) / (2 * h)
        out[name] = g
    return out, refined


def max_relative_error(analytic, numeric, floor=1e-6):
    """max |a - f| / max(|a|, |f|, floor) over all entries."""
    worst = 0.0
    for name, a in analytic.items():
        for x, y in zip(a.reshape(-1).tolist(), numeric[name]):
            worst = max(worst, abs(x - y) / max(abs(x), abs(y), floor))
    return worst


# ---------------------------------------------------------------- decoding

def _log_probs(model, state, prefix):
    row = [float(x) for x in model.next_logits(state, [prefix])[0]]
    top = max(row)
    z = math.log(sum(math.exp(x - top) for x in row if x > -math.inf))
    return [x - top - z for x in row]


def best_title(model, input_ids, n_vocab, max_len, length_penalty=0.0):
    """Exhaustive search over every word sequence of length <= max_len.

    Titles shorter than max_len pay for EOS; at max_len they stop without it.
    Returns (score, words); ties go to the lexicographically smaller sequence.
    """
    state = model.start(input_ids)
    best = None
    for n in range(max_len + 1):
        for words in itertools.product(range(4, n_vocab), repeat=n):
            prefix = [2]
            s = 0.0
            for t in words:
                s += _log_probs(model, state, prefix)[t]
                prefix.append(t)
            scored = n
            if n < max_len:
                s += _log_probs(model, state, prefix)[3]
                scored += 1
            if length_penalty:
                s = s / max(scored, 1) ** length_penalty
            if best is None or s > best[0]:
                best = (s, words)
    return best

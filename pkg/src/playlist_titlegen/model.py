"""Transformer encoder-decoder over ID sequences, built on ``autograd``.

The encoder sees no positional information by default, so the model is a
function of the multiset of input IDs. To make that hold bitwise (and not
just up to float rounding) the encoder processes tokens in a canonical order
(real tokens first, ascending ID) and cross-attention always reads that order.
"""
import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .vocab import PAD


class DivergenceError(FloatingPointError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    in_vocab_size: int
    out_vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int | None = None
    dropout: float = 0.1
    max_input_len: int = 128
    max_title_len: int = 16
    use_input_positions: bool = False
    pre_norm: bool = False

    def __post_init__(self):
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * self.d_model)
        for name in ("in_vocab_size", "out_vocab_size", "d_model", "n_heads", "n_enc_layers",
                     "n_dec_layers", "d_ff", "max_input_len", "max_title_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class Batch:
    input_ids: np.ndarray    # B x n, PAD-padded
    input_mask: np.ndarray   # B x n bool
    target_in: np.ndarray    # B x m, starts with BOS
    target_out: np.ndarray   # B x m, ends with EOS
    target_mask: np.ndarray  # B x m bool


def make_batch(examples):
    B = len(examples)
    n = max(len(e.input_ids) for e in examples)
    m = max(len(e.target_ids) for e in examples) - 1
    if n == 0:
        raise ValueError("batch has no input tokens")
    input_ids = np.full((B, n), PAD, dtype=np.int64)
    target = np.full((B, m + 1), PAD, dtype=np.int64)
    for i, e in enumerate(examples):
        if not e.input_ids:
            raise ValueError(f"example {e.pid!r} has no input tokens")
        input_ids[i, :len(e.input_ids)] = e.input_ids
        target[i, :len(e.target_ids)] = e.target_ids
    input_mask = np.zeros((B, n), dtype=bool)
    target_mask = np.zeros((B, m), dtype=bool)
    for i, e in enumerate(examples):
        input_mask[i, :len(e.input_ids)] = True
        target_mask[i, :len(e.target_ids) - 1] = True
    return Batch(input_ids, input_mask, target[:, :-1], target[:, 1:], target_mask)


def sinusoidal_table(n_pos, d):
    pos = np.arange(n_pos)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def _attn_names(prefix):
    return [f"{prefix}.{p}.{k}" for p in "qkvo" for k in "wb"]


def param_shapes(cfg):
    d, f = cfg.d_model, cfg.d_ff
    shapes = {}

    def attn(prefix):
        for p in "qkvo":
            shapes[f"{prefix}.{p}.w"] = (d, d)
            shapes[f"{prefix}.{p}.b"] = (d,)

    def ln(prefix):
        shapes[f"{prefix}.g"] = (d,)
        shapes[f"{prefix}.b"] = (d,)

    def ff(prefix):
        shapes[f"{prefix}.ff1.w"] = (d, f)
        shapes[f"{prefix}.ff1.b"] = (f,)
        shapes[f"{prefix}.ff2.w"] = (f, d)
        shapes[f"{prefix}.ff2.b"] = (d,)

    shapes["enc.embed"] = (cfg.in_vocab_size, d)
    for l in range(cfg.n_enc_layers):
        attn(f"enc.{l}.self")
        ln(f"enc.{l}.ln1")
        ff(f"enc.{l}")
        ln(f"enc.{l}.ln2")
    if cfg.pre_norm:
        ln("enc.ln_f")
    shapes["dec.embed"] = (cfg.out_vocab_size, d)
    for l in range(cfg.n_dec_layers):
        attn(f"dec.{l}.self")
        ln(f"dec.{l}.ln1")
        attn(f"dec.{l}.cross")
        ln(f"dec.{l}.ln2")
        ff(f"dec.{l}")
        ln(f"dec.{l}.ln3")
    if cfg.pre_norm:
        ln("dec.ln_f")
    shapes["out.w"] = (d, cfg.out_vocab_size)
    shapes["out.b"] = (cfg.out_vocab_size,)
    return shapes


def is_gain_or_bias(name):
    return name.endswith(".b") or name.endswith(".g")


def init_params(cfg, seed, dtype=np.float32):
    """Xavier-uniform matrices, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".g"):
            value = np.ones(shape)
        elif name.endswith(".b"):
            value = np.zeros(shape)
        else:
            bound = math.sqrt(6.0 / (shape[0] + shape[1]))
            value = rng.uniform(-bound, bound, size=shape)
        params[name] = value.astype(dtype)
    return params


def _canonical_order(input_ids, input_mask):
    # real tokens first, then ascending id; stable so ties keep a fixed order
    key = np.where(input_mask, input_ids, np.iinfo(np.int64).max)
    return np.argsort(key, axis=1, kind="stable")


class Seq2SeqModel:
    def __init__(self, cfg, params, seed=0):
        shapes = param_shapes(cfg)
        if set(shapes) != set(params):
            raise ValueError("parameter names do not match the config")
        for name, shape in shapes.items():
            if params[name].shape != shape:
                raise ValueError(f"{name}: shape {params[name].shape} != {shape}")
        self.cfg = cfg
        self.seed = seed
        self.params = {name: Tensor(np.ascontiguousarray(params[name]), requires_grad=True) for name in shapes}
        self.dtype = next(iter(params.values())).dtype
        self._dec_pos = sinusoidal_table(cfg.max_title_len, cfg.d_model).astype(self.dtype)
        self._enc_pos = sinusoidal_table(cfg.max_input_len, cfg.d_model).astype(self.dtype)
        self.trace = None  # set to a list to record attention weights

    @classmethod
    def init(cls, cfg, seed=0, dtype=np.float32):
        return cls(cfg, init_params(cfg, seed, dtype), seed)

    def arrays(self):
        return {k: t.data for k, t in self.params.items()}

    def n_params(self):
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    # ------------------------------------------------------------ layers

    def _p(self, name):
        return self.params[name]

    def _linear(self, x, prefix):
        return ag.matmul(x, self._p(prefix + ".w")) + self._p(prefix + ".b")

    def _ln(self, x, prefix):
        return ag.layer_norm(x, self._p(prefix + ".g"), self._p(prefix + ".b"))

    def _mha(self, xq, xkv, prefix, mask):
        """Multi-head attention; ``mask`` is additive and broadcasts to B x h x q x k."""
        B, nq, d = xq.shape
        nk = xkv.shape[1]
        h = self.cfg.n_heads
        dh = d // h

        def heads(t, n):
            return ag.transpose(ag.reshape(t, (B, n, h, dh)), (0, 2, 1, 3))

        q = heads(self._linear(xq, prefix + ".q"), nq)
        k = heads(self._linear(xkv, prefix + ".k"), nk)
        v = heads(self._linear(xkv, prefix + ".v"), nk)
        scores = ag.scale(ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        weights = ag.softmax(scores, mask)
        if self.trace is not None:
            self.trace.append((prefix, weights.data.copy()))
        ctx = ag.reshape(ag.transpose(ag.matmul(weights, v), (0, 2, 1, 3)), (B, nq, d))
        return self._linear(ctx, prefix + ".o")

    def _sublayer(self, x, fn, ln_prefix, rng):
        if self.cfg.pre_norm:
            return x + ag.dropout(fn(self._ln(x, ln_prefix)), self.cfg.dropout, rng)
        return self._ln(x + ag.dropout(fn(x), self.cfg.dropout, rng), ln_prefix)

    def _ff(self, x, prefix):
        return self._linear(ag.relu(self._linear(x, prefix + ".ff1")), prefix + ".ff2")

    # ------------------------------------------------------------ encoder

    def _pad_mask(self, input_mask):
        neg = np.where(input_mask, 0.0, -np.inf).astype(self.dtype)
        return neg[:, None, None, :]

    def _encode(self, input_ids, input_mask, rng=None):
        """Returns (z, mask) with z in canonical order when positions are off."""
        input_ids = np.asarray(input_ids)
        input_mask = np.asarray(input_mask, dtype=bool)
        if not input_mask.any(axis=1).all():
            raise ValueError("every batch row needs at least one real input token")
        if not self.cfg.use_input_positions:
            order = _canonical_order(input_ids, input_mask)
            input_ids = np.take_along_axis(input_ids, order, axis=1)
            input_mask = np.take_along_axis(input_mask, order, axis=1)
        x = ag.embedding(self._p("enc.embed"), input_ids)
        if self.cfg.use_input_positions:
            n = input_ids.shape[1]
            if n > self.cfg.max_input_len:
                raise ValueError("input longer than max_input_len")
            x = x + self._enc_pos[:n]
        mask = self._pad_mask(input_mask)
        for l in range(self.cfg.n_enc_layers):
            p = f"enc.{l}"
            x = self._sublayer(x, lambda t: self._mha(t, t, p + ".self", mask), p + ".ln1", rng)
            x = self._sublayer(x, lambda t: self._ff(t, p), p + ".ln2", rng)
        if self.cfg.pre_norm:
            x = self._ln(x, "enc.ln_f")
        return x, input_mask

    def encode(self, input_ids, input_mask):
        """Latent rows aligned with the caller's input order (eval mode)."""
        input_ids = np.asarray(input_ids)
        input_mask = np.asarray(input_mask, dtype=bool)
        with ag.no_grad():
            z, _ = self._encode(input_ids, input_mask)
        if self.cfg.use_input_positions:
            return z.data
        order = _canonical_order(input_ids, input_mask)
        out = np.empty_like(z.data)
        np.put_along_axis(out, order[..., None], z.data, axis=1)
        return out

    # ------------------------------------------------------------ decoder

    def _decode(self, z, enc_mask, target_in, rng=None):
        target_in = np.asarray(target_in)
        m = target_in.shape[1]
        if m > self.cfg.max_title_len:
            raise ValueError("target prefix longer than max_title_len")
        y = ag.embedding(self._p("dec.embed"), target_in) + self._dec_pos[:m]
        causal = np.triu(np.full((m, m), -np.inf, dtype=self.dtype), k=1)[None, None]
        cross_mask = self._pad_mask(enc_mask)
        for l in range(self.cfg.n_dec_layers):
            p = f"dec.{l}"
            y = self._sublayer(y, lambda t: self._mha(t, t, p + ".self", causal), p + ".ln1", rng)
            y = self._sublayer(y, lambda t: self._mha(t, z, p + ".cross", cross_mask), p + ".ln2", rng)
            y = self._sublayer(y, lambda t: self._ff(t, p), p + ".ln3", rng)
        if self.cfg.pre_norm:
            y = self._ln(y, "dec.ln_f")
        return self._linear(y, "out")

    def decode_step(self, z, input_mask, prefix):
        """Next-token logits (B x V) for each prefix, given latent rows ``z``.

        ``z`` may be in any row order: rows are re-sorted by content so the
        result depends only on the set of latent rows.
        """
        z = np.asarray(z, dtype=self.dtype)
        input_mask = np.asarray(input_mask, dtype=bool)
        prefix = np.atleast_2d(np.asarray(prefix))
        if not self.cfg.use_input_positions:
            z, input_mask = _content_sort(z, input_mask)
        with ag.no_grad():
            logits = self._decode(Tensor(z), input_mask, prefix)
        return logits.data[:, -1, :]

    # ------------------------------------------------------------ generation protocol

    def start(self, input_ids):
        """Encoder state for one example, consumed by ``next_logits``."""
        ids = np.asarray(input_ids, dtype=np.int64)[None, :]
        with ag.no_grad():
            z, mask = self._encode(ids, np.ones_like(ids, dtype=bool))
        return z.data, mask

    def next_logits(self, state, prefixes):
        z, mask = state
        prefixes = np.asarray(prefixes, dtype=np.int64)
        k = prefixes.shape[0]
        with ag.no_grad():
            logits = self._decode(Tensor(np.repeat(z, k, axis=0)), np.repeat(mask, k, axis=0), prefixes)
        return logits.data[:, -1, :]

    # ------------------------------------------------------------ objective

    def forward_logits(self, batch, rng=None):
        z, mask = self._encode(batch.input_ids, batch.input_mask, rng)
        return self._decode(z, mask, batch.target_in, rng)

    def loss(self, batch, rng=None):
        """Mean NLL over unmasked target positions; call ``.backward()`` on it for grads."""
        logits = self.forward_logits(batch, rng)
        out = ag.cross_entropy(logits, batch.target_out, batch.target_mask)
        if not np.isfinite(out.data):
            raise DivergenceError(f"non-finite loss {float(out.data)}")
        return out

    def loss_and_grads(self, batch, rng=None):
        self.zero_grad()
        out = self.loss(batch, rng)
        out.backward()
        grads = {}
        for name, t in self.params.items():
            grads[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        return float(out.data), grads

    def example_nll(self, batch):
        """Per-example (sum over title tokens, token count) in eval mode."""
        with ag.no_grad():
            logits = self.forward_logits(batch)
        nll = ag.token_nll(logits.data.astype(np.float64), batch.target_out) * batch.target_mask
        return nll.sum(axis=1), batch.target_mask.sum(axis=1)


def _content_sort(z, mask):
    """Sort rows of each z[b] (real rows first) lexicographically by value."""
    out = np.empty_like(z)
    out_mask = np.empty_like(mask)
    for b in range(z.shape[0]):
        keys = [z[b, :, j] for j in range(z.shape[2] - 1, -1, -1)] + [~mask[b]]
        order = np.lexsort(keys)
        out[b] = z[b, order]
        out_mask[b] = mask[b, order]
    return out, out_mask


# ---------------------------------------------------------------- checkpoints

_MAGIC = b"PTGCKPT1"


def save_checkpoint(path, model, vocab_hashes, meta=None):
    """Self-describing binary: magic, header length, JSON header, raw tensors."""
    tensors = []
    blobs = []
    offset = 0
    for name, t in model.params.items():
        arr = np.ascontiguousarray(t.data)
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "config": asdict(model.cfg),
        "seed": model.seed,
        "dtype": np.dtype(model.dtype).name,
        "tensors": tensors,
        "vocab_sha256": dict(vocab_hashes),
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        for raw in blobs:
            f.write(raw)


def read_checkpoint_header(path):
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (n,) = struct.unpack("<Q", f.read(8))
        return json.loads(f.read(n).decode("utf-8")), len(_MAGIC) + 8 + n


def load_checkpoint(path, vocab_hashes=None):
    """Returns (model, header). ``vocab_hashes`` (role -> sha256) are verified if given."""
    header, start = read_checkpoint_header(path)
    if vocab_hashes:
        stored = header["vocab_sha256"]
        for role, digest in vocab_hashes.items():
            if stored.get(role) != digest:
                raise CheckpointError(f"{role} vocab hash mismatch: checkpoint {stored.get(role)}, given {digest}")
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    with open(path, "rb") as f:
        f.seek(start)
        body = f.read()
    params = {}
    for t in header["tensors"]:
        raw = body[t["offset"]:t["offset"] + t["nbytes"]]
        params[t["name"]] = np.frombuffer(raw, dtype=dtype).reshape(t["shape"]).astype(dtype.newbyteorder("="))
    cfg = ModelConfig(**header["config"])
    return Seq2SeqModel(cfg, params, header["seed"]), header


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

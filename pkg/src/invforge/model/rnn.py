"""Sequence baseline: separate bi-directional GRU encoders for method and invariant tokens.

Both encoders share one embedding table.  Each direction's states are mean-pooled over
real tokens, the four pooled vectors are concatenated and scored by a tanh hidden layer.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..graphs import Vocabulary
from .encode import EmptyInput, EncodedPair, SeqBatch, VocabularyMismatch, make_seq_batch
from .gru import bce_from_logits, glorot, gru_names, gru_step, gru_step_back, sigmoid

ENCODERS = ("meth", "inv")
DIRECTIONS = ("fw", "bw")


@dataclass(frozen=True)
class RnnConfig:
    embedding_dim: int = 300
    hidden_per_direction: int = 250
    head_hidden: int = 128
    epochs: int = 3
    learning_rate: float = 1e-3
    batch_token_budget: int = 4000
    eval_epoch: int = 3

    def to_json(self) -> dict:
        return asdict(self)


def param_shapes(cfg: RnnConfig, n_subtokens: int) -> dict[str, tuple[int, ...]]:
    e, d, h = cfg.embedding_dim, cfg.hidden_per_direction, cfg.head_hidden
    shapes: dict[str, tuple[int, ...]] = {"emb": (n_subtokens, e)}
    for enc in ENCODERS:
        for direction in DIRECTIONS:
            for name in gru_names(f"{enc}_{direction}_"):
                gate = name.rsplit("_", 1)[1]
                shapes[name] = {"W": (d, e), "U": (d, d), "b": (d,)}[gate[0]]
    shapes.update({"head_W1": (h, 4 * d), "head_b1": (h,), "head_w2": (h,), "head_b2": (1,)})
    return shapes


def init_params(cfg: RnnConfig, vocab: Vocabulary, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in param_shapes(cfg, vocab.n_subtokens).items():
        is_bias = name != "emb" and name.rsplit("_", 1)[1].startswith("b")
        out[name] = np.zeros(shape) if is_bias else glorot(rng, shape)
    return out


def _encode_direction(p: dict, prefix: str, ids: np.ndarray, mask: np.ndarray, keep: bool):
    b, t = ids.shape
    d = p[prefix + "Uz"].shape[0]
    x = p["emb"][ids]  # (B, T, E)
    w = np.concatenate([p[prefix + "Wz"], p[prefix + "Wr"], p[prefix + "Wc"]], axis=0)
    xw = x @ w.T  # (B, T, 3d)
    h = np.zeros((b, d))
    pooled = np.zeros((b, d))
    caches = []
    for step in range(t):
        h, cache = gru_step(p, prefix, x[:, step], h, xw[:, step])
        if keep:
            caches.append(cache)
        pooled += mask[:, step : step + 1] * h
    lengths = mask.sum(axis=1, keepdims=True)
    return pooled / lengths, (caches, x, lengths)


def _backward_direction(p: dict, prefix: str, ids: np.ndarray, mask: np.ndarray, dpooled: np.ndarray, cache, g: dict) -> None:
    caches, x, lengths = cache
    b, t = ids.shape
    dpool_h = dpooled / lengths
    dh = np.zeros_like(dpooled)
    dxw = np.zeros((b, t, 3 * dpooled.shape[1]))
    for step in reversed(range(t)):
        dh = dh + mask[:, step : step + 1] * dpool_h
        dxw[:, step], dh = gru_step_back(p, prefix, dh, caches[step], g, dxw=True)
    d = dpooled.shape[1]
    flat_dxw = dxw.reshape(b * t, 3 * d)
    flat_x = x.reshape(b * t, -1)
    for i, gate in enumerate("zrc"):
        g[prefix + "W" + gate] += flat_dxw[:, i * d : (i + 1) * d].T @ flat_x
    w = np.concatenate([p[prefix + "Wz"], p[prefix + "Wr"], p[prefix + "Wc"]], axis=0)
    dx = flat_dxw @ w
    np.add.at(g["emb"], ids.reshape(-1), dx)


def _batches(pairs: list[EncodedPair]) -> tuple[SeqBatch, SeqBatch]:
    if any(len(q.method) == 0 or len(q.invariant) == 0 for q in pairs):
        raise EmptyInput("empty token list")
    return make_seq_batch([q.method for q in pairs]), make_seq_batch([q.invariant for q in pairs])


def forward(params: dict, pairs: list[EncodedPair], cfg: RnnConfig | None = None, keep: bool = False):
    seqs = dict(zip(ENCODERS, _batches(pairs)))
    n_sub = params["emb"].shape[0]
    for sb in seqs.values():
        if sb.ids.size and sb.ids.max() >= n_sub:
            raise VocabularyMismatch("token id outside the embedding table")
    pooled, caches = [], {}
    for enc in ENCODERS:
        sb = seqs[enc]
        for direction in DIRECTIONS:
            ids = sb.ids if direction == "fw" else sb.rev_ids
            v, c = _encode_direction(params, f"{enc}_{direction}_", ids, sb.mask, keep)
            pooled.append(v)
            caches[(enc, direction)] = (ids, sb.mask, c)
    r = np.concatenate(pooled, axis=1)
    u = np.tanh(r @ params["head_W1"].T + params["head_b1"])
    logits = u @ params["head_w2"] + params["head_b2"][0]
    return logits, ((caches, r, u) if keep else None)


def loss_and_grad(params: dict, pairs: list[EncodedPair], cfg: RnnConfig | None = None):
    logits, (caches, r, u) = forward(params, pairs, cfg, keep=True)
    labels = np.array([q.label for q in pairs])
    loss, dlogits = bce_from_logits(logits, labels)
    g = {k: np.zeros_like(v) for k, v in params.items()}
    g["head_w2"] += u.T @ dlogits
    g["head_b2"] += dlogits.sum()
    da = np.outer(dlogits, params["head_w2"]) * (1.0 - u * u)
    g["head_W1"] += da.T @ r
    g["head_b1"] += da.sum(axis=0)
    dr = da @ params["head_W1"]
    d = params["meth_fw_Uz"].shape[0]
    i = 0
    for enc in ENCODERS:
        for direction in DIRECTIONS:
            ids, mask, c = caches[(enc, direction)]
            _backward_direction(params, f"{enc}_{direction}_", ids, mask, dr[:, i * d : (i + 1) * d], c, g)
            i += 1
    return loss, sigmoid(logits), g


def predict_encoded(params: dict, pairs: list[EncodedPair], cfg: RnnConfig, vocab: Vocabulary | None = None, budget: int | None = None) -> list[float]:
    from .ggnn import pack_batches

    if vocab is not None:
        fp = vocab.fingerprint()
        if any(q.vocab != fp for q in pairs):
            raise VocabularyMismatch("pairs were encoded with a different vocabulary")
    out: list[float] = []
    for chunk in pack_batches(pairs, budget or cfg.batch_token_budget):
        logits, _ = forward(params, chunk, cfg)
        out.extend(sigmoid(logits).tolist())
    return out

"""Gated graph neural network validator with reverse-mode gradients through all steps.

Per step, every node sums messages ``W_k h(w) + b_k`` over its incoming edges of each
kind k, then updates its state with a gated recurrent cell shared across steps.  The
invariant nodes' final states are averaged and scored by a one-hidden-layer head.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..graphs import Vocabulary
from .encode import N_EDGE_KINDS, EncodedGraph, GraphBatch, VocabularyMismatch, make_graph_batch
from .gru import bce_from_logits, glorot, gru_names, gru_step, gru_step_back, sigmoid


@dataclass(frozen=True)
class GgnnConfig:
    hidden_dim: int = 128
    steps: int = 8
    head_hidden: int = 128
    epochs: int = 3
    learning_rate: float = 1e-3
    batch_token_budget: int = 4000
    eval_epoch: int = 3

    def __post_init__(self):
        if self.steps < 8:
            raise ValueError("message passing needs at least 8 steps")
        if self.hidden_dim < 1 or self.head_hidden < 1:
            raise ValueError("dimensions must be positive")

    def to_json(self) -> dict:
        return asdict(self)


def param_shapes(cfg: GgnnConfig, n_subtokens: int, n_kinds: int) -> dict[str, tuple[int, ...]]:
    m, h = cfg.hidden_dim, cfg.head_hidden
    shapes = {
        "sub_emb": (n_subtokens, m),
        "kind_emb": (n_kinds, m),
        "edge_W": (N_EDGE_KINDS, m, m),
        "edge_b": (N_EDGE_KINDS, m),
    }
    for name in gru_names("gru_"):
        shapes[name] = (m,) if "_b" in name else (m, m)
    shapes.update({"head_W1": (h, m), "head_b1": (h,), "head_w2": (h,), "head_b2": (1,)})
    return shapes


def init_params(cfg: GgnnConfig, vocab: Vocabulary, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in param_shapes(cfg, vocab.n_subtokens, vocab.n_kinds).items():
        is_bias = name in ("edge_b", "head_b1", "head_b2") or name.startswith("gru_b")
        out[name] = np.zeros(shape) if is_bias else glorot(rng, shape)
    return out


def _check(params: dict, batch: GraphBatch) -> None:
    if batch.subtokens.shape[1] != params["sub_emb"].shape[0]:
        raise VocabularyMismatch("subtoken table size differs from the batch encoding")
    if batch.kind_ids.size and batch.kind_ids.max() >= params["kind_emb"].shape[0]:
        raise VocabularyMismatch("node kind outside the kind table")


def forward(params: dict, batch: GraphBatch, cfg: GgnnConfig, keep: bool = False):
    """Logits for every graph in the batch (and the cache for backward when ``keep``)."""
    _check(params, batch)
    n, m = batch.n_nodes, params["kind_emb"].shape[1]
    h = params["kind_emb"][batch.kind_ids] + batch.subtokens @ params["sub_emb"]
    w_stack = params["edge_W"].transpose(2, 0, 1).reshape(m, N_EDGE_KINDS * m)  # [W_1^T ... W_6^T]
    steps = []
    for _ in range(cfg.steps):
        hw = (h @ w_stack).reshape(n, N_EDGE_KINDS, m).transpose(1, 0, 2).reshape(N_EDGE_KINDS * n, m)
        msg = batch.adjacency @ hw + batch.in_degree @ params["edge_b"]
        h_new, cache = gru_step(params, "gru_", msg, h)
        if keep:
            steps.append(cache)
        h = h_new
    r = batch.readout @ h
    a = r @ params["head_W1"].T + params["head_b1"]
    u = np.tanh(a)
    logits = u @ params["head_w2"] + params["head_b2"][0]
    cache = (steps, r, u) if keep else None
    return logits, cache


def loss_and_grad(params: dict, batch: GraphBatch, cfg: GgnnConfig):
    logits, (steps, r, u) = forward(params, batch, cfg, keep=True)
    loss, dlogits = bce_from_logits(logits, batch.labels)
    g = {k: np.zeros_like(v) for k, v in params.items()}
    n, m = batch.n_nodes, params["kind_emb"].shape[1]
    g["head_w2"] += u.T @ dlogits
    g["head_b2"] += dlogits.sum()
    da = np.outer(dlogits, params["head_w2"]) * (1.0 - u * u)
    g["head_W1"] += da.T @ r
    g["head_b1"] += da.sum(axis=0)
    dh = batch.readout.T @ (da @ params["head_W1"])
    w = params["edge_W"]
    adj_t = batch.adjacency.T.tocsr()
    for cache in reversed(steps):
        dmsg, dh = gru_step_back(params, "gru_", dh, cache, g)
        h_prev = cache[1]
        g["edge_b"] += batch.in_degree.T @ dmsg
        dhw = (adj_t @ dmsg).reshape(N_EDGE_KINDS, n, m)
        for k in range(N_EDGE_KINDS):
            g["edge_W"][k] += dhw[k].T @ h_prev
            dh = dh + dhw[k] @ w[k]
    np.add.at(g["kind_emb"], batch.kind_ids, dh)
    g["sub_emb"] += batch.subtokens.T @ dh
    return loss, sigmoid(logits), g


def predict_encoded(params: dict, graphs: list[EncodedGraph], cfg: GgnnConfig, vocab: Vocabulary | None = None, budget: int | None = None) -> list[float]:
    """Probabilities, computed in node-budget batches; each score depends only on its graph."""
    if vocab is not None:
        fp = vocab.fingerprint()
        if any(g.vocab != fp for g in graphs):
            raise VocabularyMismatch("graphs were encoded with a different vocabulary")
    out: list[float] = []
    n_sub = params["sub_emb"].shape[0]
    for chunk in pack_batches(graphs, budget or cfg.batch_token_budget):
        logits, _ = forward(params, make_graph_batch(chunk, n_sub), cfg)
        out.extend(sigmoid(logits).tolist())
    return out


def pack_batches(items: list, budget: int) -> list[list]:
    """Greedy packing in the given order: start a new batch when the size budget would overflow."""
    batches: list[list] = []
    current: list = []
    used = 0
    for it in items:
        if current and used + it.size > budget:
            batches.append(current)
            current, used = [], 0
        current.append(it)
        used += it.size
    if current:
        batches.append(current)
    return batches

"""Integer encodings of graphs and token sequences, and their batches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..graphs import EDGE_INDEX, EDGE_KINDS, MethodGraph, Vocabulary, node_subtokens, split_tokens

N_EDGE_KINDS = len(EDGE_KINDS)


class VocabularyMismatch(ValueError):
    pass


class EmptyInvariantNodes(ValueError):
    pass


class EmptyInput(ValueError):
    pass


def label_value(label: str | None) -> float:
    if label == "valid":
        return 1.0
    if label == "invalid":
        return 0.0
    return float("nan")


@dataclass
class EncodedGraph:
    graph_id: str
    kind_ids: np.ndarray
    sub_nodes: np.ndarray
    sub_ids: np.ndarray
    edges: tuple[tuple[np.ndarray, np.ndarray], ...]
    inv_nodes: np.ndarray
    label: float
    vocab: str

    @property
    def n_nodes(self) -> int:
        return len(self.kind_ids)

    @property
    def size(self) -> int:
        return self.n_nodes


def encode_graph(g: MethodGraph, vocab: Vocabulary) -> EncodedGraph:
    if not g.invariant_nodes:
        raise EmptyInvariantNodes(g.graph_id)
    kind_ids = np.array([vocab.kind_id(k) for k in g.kinds], dtype=np.int64)
    sub_nodes, sub_ids = [], []
    for i, text in enumerate(g.texts):
        for tok in node_subtokens(text):
            sub_nodes.append(i)
            sub_ids.append(vocab.subtoken_id(tok))
    per_kind: list[tuple[list[int], list[int]]] = [([], []) for _ in EDGE_KINDS]
    for s, d, k in g.edges:
        per_kind[EDGE_INDEX[k]][0].append(s)
        per_kind[EDGE_INDEX[k]][1].append(d)
    edges = tuple((np.array(s, dtype=np.int64), np.array(d, dtype=np.int64)) for s, d in per_kind)
    return EncodedGraph(
        g.graph_id,
        kind_ids,
        np.array(sub_nodes, dtype=np.int64),
        np.array(sub_ids, dtype=np.int64),
        edges,
        np.array(sorted(g.invariant_nodes), dtype=np.int64),
        label_value(g.label),
        vocab.fingerprint(),
    )


@dataclass
class GraphBatch:
    """Several graphs as one disconnected graph, plus per-graph readout weights."""

    n_nodes: int
    kind_ids: np.ndarray
    subtokens: sp.csr_matrix  # (N, V) counts
    adjacency: sp.csr_matrix  # (N, 6N): row dst, column kind*N + src
    in_degree: np.ndarray  # (N, 6)
    readout: sp.csr_matrix  # (B, N) mean weights over invariant nodes
    labels: np.ndarray
    graph_ids: list[str]


def make_graph_batch(graphs: list[EncodedGraph], n_subtokens: int) -> GraphBatch:
    offsets = np.cumsum([0] + [g.n_nodes for g in graphs])
    n = int(offsets[-1])
    kind_ids = np.concatenate([g.kind_ids for g in graphs]) if graphs else np.zeros(0, dtype=np.int64)
    rows = np.concatenate([g.sub_nodes + o for g, o in zip(graphs, offsets)]) if graphs else np.zeros(0, dtype=np.int64)
    cols = np.concatenate([g.sub_ids for g in graphs]) if graphs else np.zeros(0, dtype=np.int64)
    subtokens = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n_subtokens))
    a_rows, a_cols = [], []
    for k in range(N_EDGE_KINDS):
        for g, o in zip(graphs, offsets):
            src, dst = g.edges[k]
            a_rows.append(dst + o)
            a_cols.append(src + o + k * n)
    a_rows = np.concatenate(a_rows) if a_rows else np.zeros(0, dtype=np.int64)
    a_cols = np.concatenate(a_cols) if a_cols else np.zeros(0, dtype=np.int64)
    adjacency = sp.csr_matrix((np.ones(len(a_rows)), (a_rows, a_cols)), shape=(n, N_EDGE_KINDS * n))
    in_degree = np.zeros((n, N_EDGE_KINDS))
    if len(a_rows):
        np.add.at(in_degree, (a_rows, a_cols // max(n, 1)), 1.0)
    r_rows, r_cols, r_vals = [], [], []
    for b, (g, o) in enumerate(zip(graphs, offsets)):
        if len(g.inv_nodes) == 0:
            raise EmptyInvariantNodes(g.graph_id)
        r_rows.append(np.full(len(g.inv_nodes), b))
        r_cols.append(g.inv_nodes + o)
        r_vals.append(np.full(len(g.inv_nodes), 1.0 / len(g.inv_nodes)))
    readout = sp.csr_matrix(
        (np.concatenate(r_vals), (np.concatenate(r_rows), np.concatenate(r_cols))), shape=(len(graphs), n)
    )
    labels = np.array([g.label for g in graphs])
    return GraphBatch(n, kind_ids, subtokens, adjacency, in_degree, readout, labels, [g.graph_id for g in graphs])


@dataclass
class EncodedPair:
    """Method and invariant token-id sequences for the sequence model."""

    graph_id: str
    method: np.ndarray
    invariant: np.ndarray
    label: float
    vocab: str

    @property
    def size(self) -> int:
        return len(self.method) + len(self.invariant)


def _token_ids(tokens: list[str], vocab: Vocabulary) -> np.ndarray:
    ids = [vocab.subtoken_id(t) for tok in tokens for t in node_subtokens(tok)]
    return np.array(ids, dtype=np.int64)


def encode_pair(g: MethodGraph, vocab: Vocabulary) -> EncodedPair:
    method, invariant = split_tokens(g)
    m, i = _token_ids(method, vocab), _token_ids(invariant, vocab)
    if len(m) == 0 or len(i) == 0:
        raise EmptyInput(g.graph_id)
    return EncodedPair(g.graph_id, m, i, label_value(g.label), vocab.fingerprint())


@dataclass
class SeqBatch:
    ids: np.ndarray  # (B, T) padded at the end with 0
    rev_ids: np.ndarray  # each sequence reversed, same padding
    mask: np.ndarray  # (B, T) 1.0 on real tokens
    lengths: np.ndarray


def make_seq_batch(seqs: list[np.ndarray]) -> SeqBatch:
    if any(len(s) == 0 for s in seqs):
        raise EmptyInput("empty token sequence")
    t = max(len(s) for s in seqs)
    ids = np.zeros((len(seqs), t), dtype=np.int64)
    rev = np.zeros_like(ids)
    mask = np.zeros((len(seqs), t))
    for b, s in enumerate(seqs):
        ids[b, : len(s)] = s
        rev[b, : len(s)] = s[::-1]
        mask[b, : len(s)] = 1.0
    return SeqBatch(ids, rev, mask, np.array([len(s) for s in seqs]))

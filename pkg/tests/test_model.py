from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import replace

import numpy as np
import pytest

from gradcheck import _SOURCES, ggnn_check, random_graphs, rnn_check
from invforge.graphs import MethodGraph, build_graph, build_vocab, inject_invariant, invariant_graph
from invforge.invariants import NumGe, enumerate_candidates, parse_invariant
from invforge.minilang import parse
from invforge.model import (
    EmptyInput,
    EmptyInvariantNodes,
    GgnnConfig,
    RnnConfig,
    VocabularyMismatch,
    load_checkpoint,
    predict,
    predict_checkpoint,
    train,
)
from invforge.model import ggnn, rnn
from invforge.model.encode import encode_graph, encode_pair, make_graph_batch
from invforge.model.train import dataset_loss, encode_for, vocab_for

SMALL = GgnnConfig(hidden_dim=6, head_hidden=5, batch_token_budget=400)
SMALL_RNN = RnnConfig(embedding_dim=5, hidden_per_direction=4, head_hidden=4, batch_token_budget=400)


def zeroed(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def labeled_corpus(n_per_source: int = 25, seed: int = 0) -> list[MethodGraph]:
    """Candidates over small methods; lower bounds are 'valid', everything else not."""
    rng = random.Random(seed)
    out = []
    for src in _SOURCES:
        fn = next(iter(parse(src).functions.values()))
        base = build_graph(fn.tree(), fn.name, "p")
        cands = enumerate_candidates({p: "int" for p in fn.param_names}, "pre", fn.name)
        for inv in rng.sample(cands, min(n_per_source, len(cands))):
            out.append(inject_invariant(base, inv, "valid" if isinstance(inv.pred, NumGe) else "invalid"))
    return out


# -- gradients ------------------------------------------------------------------------------


@pytest.mark.parametrize("model", ["ggnn", "nocontext"])
def test_graph_model_gradients(model):
    for g in random_graphs(101, 2):
        worst, checked = ggnn_check(g, model, seed=3)
        assert checked > 100
        assert worst < 1e-4


def test_rnn_gradients():
    for g in random_graphs(102, 2):
        worst, checked = rnn_check(g, seed=3)
        assert checked > 100
        assert worst < 1e-4


# -- forward properties -----------------------------------------------------------------------


@pytest.mark.parametrize("model", ["ggnn", "nocontext", "rnn"])
def test_zero_params_give_one_half(model):
    graphs = random_graphs(7)
    cfg = SMALL_RNN if model == "rnn" else SMALL
    vocab = vocab_for(model, graphs)
    mod = rnn if model == "rnn" else ggnn
    params = zeroed(mod.init_params(cfg, vocab, 0))
    scores = [s for _, s in predict(model, params, cfg, vocab, graphs)]
    assert scores == [0.5] * len(graphs)
    # a balanced set scored at 0.5 has cross-entropy ln 2
    balanced = [replace(g, label=lab) for g in graphs for lab in ("valid", "invalid")]
    loss = dataset_loss(model, params, encode_for(model, balanced, vocab), cfg)
    assert abs(loss - math.log(2)) < 1e-12


@pytest.mark.parametrize("model", ["ggnn", "nocontext", "rnn"])
def test_outputs_strictly_inside_unit_interval(model):
    graphs = labeled_corpus(4)
    cfg = SMALL_RNN if model == "rnn" else SMALL
    vocab = vocab_for(model, graphs)
    mod = rnn if model == "rnn" else ggnn
    params = {k: v * 5 for k, v in mod.init_params(cfg, vocab, 1).items()}
    scores = [s for _, s in predict(model, params, cfg, vocab, graphs)]
    assert all(0.0 < s < 1.0 for s in scores)


def test_no_context_ignores_method_body():
    inv_a = parse_invariant("pre close: n >= 0")
    src_a = "fn close(m_stream, n) { if (m_stream != null) { m_stream.flush = 1; } return n; }"
    src_b = "fn close(n) { return n + n; }"
    ga = inject_invariant(build_graph(parse(src_a).functions["close"].tree(), "close"), inv_a)
    gb = inject_invariant(build_graph(parse(src_b).functions["close"].tree(), "close"), inv_a)
    vocab = build_vocab([ga, gb], min_count=1)
    params = ggnn.init_params(SMALL, vocab, 4)
    (_, a), (_, b) = predict("nocontext", params, SMALL, vocab, [ga, gb])
    assert a == b
    (_, fa), (_, fb) = predict("ggnn", params, SMALL, vocab, [ga, gb])
    assert fa != fb


def permuted(g: MethodGraph, perm: list[int]) -> MethodGraph:
    inv = [0] * len(perm)
    for old, new in enumerate(perm):
        inv[new] = old
    return MethodGraph(
        kinds=[g.kinds[inv[i]] for i in range(len(perm))],
        texts=[g.texts[inv[i]] for i in range(len(perm))],
        children=[[perm[c] for c in g.children[inv[i]]] for i in range(len(perm))],
        root=perm[g.root],
        invariant_nodes=tuple(sorted(perm[i] for i in g.invariant_nodes)),
        method=g.method, project=g.project, point=g.point, invariant=g.invariant, label=g.label,
        edges=[(perm[s], perm[d], k) for s, d, k in g.edges],
    )


def test_permutation_equivariance():
    rng = random.Random(2)
    for g in random_graphs(11):
        vocab = build_vocab([g], min_count=1)
        params = ggnn.init_params(SMALL, vocab, 5)
        perm = list(range(g.n_nodes))
        rng.shuffle(perm)
        (_, a), (_, b) = predict("ggnn", params, SMALL, vocab, [g, permuted(g, perm)])
        assert abs(a - b) < 1e-12


def _distances(g: MethodGraph, sources) -> list[float]:
    dist = [math.inf] * g.n_nodes
    adj = [[] for _ in range(g.n_nodes)]
    for s, d, _ in g.edges:
        adj[s].append(d)
    queue = deque(sources)
    for s in sources:
        dist[s] = 0
    while queue:
        n = queue.popleft()
        for m in adj[n]:
            if dist[m] == math.inf:
                dist[m] = dist[n] + 1
                queue.append(m)
    return dist


def test_message_passing_locality():
    # the body block is two hops from everything it holds, so distance comes from nesting
    depth = 8
    src = "fn deep(v) {\n    w = 3;\n" + "if (w > 2) {\n" * depth + "w = 5;\n" + "}\n" * depth + "}"
    g = inject_invariant(build_graph(parse(src).functions["deep"].tree(), "deep"), parse_invariant("pre deep: v >= 0"))
    dist = _distances(g, list(g.invariant_nodes))
    literals = [i for i, k in enumerate(g.kinds) if k == "IntLit"]
    far = [i for i in literals if dist[i] > SMALL.steps]
    near = [i for i in literals if dist[i] <= SMALL.steps - 1 and i not in g.invariant_nodes]
    assert far and near
    vocab = build_vocab([g], min_count=1)
    params = ggnn.init_params(SMALL, vocab, 6)

    def with_text(node: int, text: str) -> MethodGraph:
        texts = list(g.texts)
        texts[node] = text
        return replace(g, texts=texts)

    (_, base), (_, moved_far), (_, moved_near) = predict(
        "ggnn", params, SMALL, vocab, [g, with_text(far[-1], "7"), with_text(near[0], "7")]
    )
    assert vocab.subtoken_id("7") != vocab.subtoken_id(g.texts[far[-1]])
    assert moved_far == base
    assert moved_near != base


def test_scores_independent_of_batch_size():
    graphs = labeled_corpus(10)
    vocab = vocab_for("ggnn", graphs)
    params = ggnn.init_params(SMALL, vocab, 8)
    whole = predict("ggnn", params, SMALL, vocab, graphs[:50], budget=10**6)
    for i in (0, 17, 49):
        (_, alone), = predict("ggnn", params, SMALL, vocab, [graphs[i]], budget=1)
        assert abs(alone - whole[i][1]) < 1e-12
    assert predict("ggnn", params, SMALL, vocab, graphs[:50], budget=300) == predict("ggnn", params, SMALL, vocab, graphs[:50], budget=300)


# -- errors -----------------------------------------------------------------------------------


def test_vocabulary_mismatch():
    graphs = labeled_corpus(3)
    vocab = vocab_for("ggnn", graphs)
    other = build_vocab(graphs[:2], min_count=1)
    params = ggnn.init_params(SMALL, other, 0)
    with pytest.raises(VocabularyMismatch):
        ggnn.forward(params, make_graph_batch([encode_graph(graphs[0], vocab)], vocab.n_subtokens), SMALL)
    with pytest.raises(VocabularyMismatch):
        ggnn.predict_encoded(ggnn.init_params(SMALL, vocab, 0), [encode_graph(graphs[0], other)], SMALL, vocab)


def test_empty_invariant_and_input():
    g = build_graph(parse(_SOURCES[1]).functions["abs"].tree(), "abs")
    vocab = build_vocab([g], min_count=1)
    with pytest.raises(EmptyInvariantNodes):
        encode_graph(g, vocab)
    # an invariant with no method tokens around it has nothing for the method encoder
    alone = invariant_graph(parse_invariant("pre abs: v >= 0"))
    with pytest.raises(EmptyInput):
        encode_pair(replace(alone, invariant_nodes=tuple(range(alone.n_nodes))), vocab)


def test_config_validation():
    with pytest.raises(ValueError):
        GgnnConfig(steps=4)
    assert GgnnConfig().eval_epoch == 3 and RnnConfig().eval_epoch == 3
    assert GgnnConfig().hidden_dim == 128 and RnnConfig().hidden_per_direction == 250


# -- training ---------------------------------------------------------------------------------


def test_training_lowers_loss_and_is_deterministic(tmp_path):
    graphs = labeled_corpus()
    assert len(graphs) >= 100
    cfg = replace(SMALL, epochs=2)
    res = train(graphs, "ggnn", cfg, seed=1, ckpt_dir=tmp_path)
    assert res.epochs[0].loss < res.initial_loss
    assert sorted(res.checkpoints) == [1, 2]
    again = train(graphs, "ggnn", cfg, seed=1, track_loss=False)
    assert all(np.array_equal(res.params[k], again.params[k]) for k in res.params)
    ckpt = load_checkpoint(res.checkpoints[2])
    assert ckpt.model == "ggnn" and ckpt.config == cfg and ckpt.vocab == res.vocab
    assert all(np.array_equal(ckpt.params[k], res.params_at(2)[k]) for k in res.params)
    assert predict_checkpoint(res.checkpoints[2], graphs[:5]) == predict("ggnn", res.params, cfg, res.vocab, graphs[:5])


def test_duplicated_dataset_has_same_loss():
    graphs = labeled_corpus(8)
    vocab = vocab_for("ggnn", graphs)
    params = ggnn.init_params(SMALL, vocab, 2)
    once = dataset_loss("ggnn", params, encode_for("ggnn", graphs, vocab), SMALL)
    twice = dataset_loss("ggnn", params, encode_for("ggnn", graphs + graphs, vocab), SMALL)
    assert abs(once - twice) < 1e-12


def test_rnn_trains():
    graphs = labeled_corpus(20)
    res = train(graphs, "rnn", replace(SMALL_RNN, epochs=1), seed=0)
    assert res.epochs[0].loss < res.initial_loss

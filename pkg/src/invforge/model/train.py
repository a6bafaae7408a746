"""Training loop, prediction and model dispatch for the three validators."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..graphs import MethodGraph, Vocabulary, build_vocab, without_context
from . import ggnn, rnn
from .checkpoint import Checkpoint, config_for, load_checkpoint, save_checkpoint
from .encode import encode_graph, encode_pair, make_graph_batch
from .optim import Adam

log = logging.getLogger(__name__)


class Divergence(RuntimeError):
    def __init__(self, epoch: int, step: int, checkpoint: str | None):
        self.epoch, self.step, self.checkpoint = epoch, step, checkpoint
        super().__init__(f"loss became non-finite at epoch {epoch}, step {step}; last good checkpoint: {checkpoint}")


@dataclass
class EpochStats:
    epoch: int
    batch_loss: float
    loss: float
    n_batches: int
    seconds: float

    def to_json(self) -> dict:
        return {"epoch": self.epoch, "batch_loss": self.batch_loss, "loss": self.loss, "n_batches": self.n_batches, "seconds": round(self.seconds, 3)}


@dataclass
class TrainResult:
    model: str
    config: object
    vocab: Vocabulary
    params: dict[str, np.ndarray]
    initial_loss: float
    epochs: list[EpochStats] = field(default_factory=list)
    checkpoints: dict[int, Path] = field(default_factory=dict)
    snapshots: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)

    def params_at(self, epoch: int) -> dict[str, np.ndarray]:
        return self.snapshots.get(epoch, self.params)


def _module(model: str):
    return rnn if model == "rnn" else ggnn


def model_view(g: MethodGraph, model: str) -> MethodGraph:
    return without_context(g) if model == "nocontext" else g


def encode_for(model: str, graphs: list[MethodGraph], vocab: Vocabulary) -> list:
    if model == "rnn":
        return [encode_pair(g, vocab) for g in graphs]
    return [encode_graph(model_view(g, model), vocab) for g in graphs]


def vocab_for(model: str, graphs: list[MethodGraph]) -> Vocabulary:
    return build_vocab(model_view(g, model) for g in graphs)


def _loss_and_grad(model: str, params, batch_items, cfg, n_sub: int):
    if model == "rnn":
        return rnn.loss_and_grad(params, batch_items, cfg)
    return ggnn.loss_and_grad(params, make_graph_batch(batch_items, n_sub), cfg)


def dataset_loss(model: str, params, items: list, cfg) -> float:
    """Mean cross-entropy over all items (batching does not change the value)."""
    probs = np.array(_module(model).predict_encoded(params, items, cfg))
    labels = np.array([it.label for it in items])
    probs = np.clip(probs, 1e-300, 1.0 - 1e-16)
    return float(-np.mean(labels * np.log(probs) + (1 - labels) * np.log1p(-probs)))


def train(
    graphs: list[MethodGraph],
    model: str = "ggnn",
    cfg=None,
    seed: int = 0,
    vocab: Vocabulary | None = None,
    ckpt_dir=None,
    track_loss: bool = True,
    progress: Callable[[EpochStats], None] | None = None,
) -> TrainResult:
    """Fit a validator on labeled graphs with Adam and mean binary cross-entropy.

    Batches are packed greedily from a seeded shuffle until the node (or token) budget is
    reached.  A checkpoint is written after every epoch when ``ckpt_dir`` is given.
    """
    cfg = cfg or config_for(model)
    labeled = [g for g in graphs if g.label in ("valid", "invalid")]
    if not labeled:
        raise ValueError("no labeled graphs to train on")
    vocab = vocab or vocab_for(model, labeled)
    items = encode_for(model, labeled, vocab)
    mod = _module(model)
    params = mod.init_params(cfg, vocab, seed)
    n_sub = vocab.n_subtokens
    opt = Adam(params, lr=cfg.learning_rate)
    shuffle_rng = np.random.default_rng([seed, 1])
    initial = dataset_loss(model, params, items, cfg) if track_loss else float("nan")
    result = TrainResult(model, cfg, vocab, params, initial)
    last_ckpt: Path | None = None
    last_good = {k: v.copy() for k, v in params.items()}
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = shuffle_rng.permutation(len(items))
        batches = ggnn.pack_batches([items[i] for i in order], cfg.batch_token_budget)
        total, count = 0.0, 0
        for step, batch in enumerate(batches, start=1):
            loss, _, grads = _loss_and_grad(model, params, batch, cfg, n_sub)
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
                for k in params:
                    params[k][...] = last_good[k]
                raise Divergence(epoch, step, str(last_ckpt) if last_ckpt else None)
            opt.step(grads)
            total += loss * len(batch)
            count += len(batch)
        if not all(np.isfinite(p).all() for p in params.values()):
            for k in params:
                params[k][...] = last_good[k]
            raise Divergence(epoch, len(batches), str(last_ckpt) if last_ckpt else None)
        last_good = {k: v.copy() for k, v in params.items()}
        result.snapshots[epoch] = last_good
        full = dataset_loss(model, params, items, cfg) if track_loss else float("nan")
        stats = EpochStats(epoch, total / count, full, len(batches), time.perf_counter() - start)
        result.epochs.append(stats)
        log.info("epoch %d: batch loss %.5f, loss %.5f, %d batches, %.1fs", epoch, stats.batch_loss, full, len(batches), stats.seconds)
        if progress:
            progress(stats)
        if ckpt_dir is not None:
            last_ckpt = Path(ckpt_dir) / f"epoch-{epoch}.ckpt"
            save_checkpoint(last_ckpt, Checkpoint(model, cfg, vocab, last_good, {"epoch": epoch, "seed": seed}))
            result.checkpoints[epoch] = last_ckpt
    return result


def predict(model: str, params, cfg, vocab: Vocabulary, graphs: list[MethodGraph], budget: int | None = None) -> list[tuple[str, float]]:
    """(graph id, probability valid) per graph, in input order."""
    items = encode_for(model, graphs, vocab)
    scores = _module(model).predict_encoded(params, items, cfg, vocab, budget)
    return [(g.graph_id, s) for g, s in zip(graphs, scores)]


def predict_checkpoint(path, graphs: list[MethodGraph], budget: int | None = None) -> list[tuple[str, float]]:
    ckpt = load_checkpoint(path)
    return predict(ckpt.model, ckpt.params, ckpt.config, ckpt.vocab, graphs, budget)

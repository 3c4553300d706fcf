"""Two-layer GCN link predictor trained with BCE and Adam, in plain numpy.

Forward pass::

    A_hat = D^-1/2 (A + I) D^-1/2
    H1    = relu(A_hat @ X @ W1)
    H     = A_hat @ H1 @ W2
    p(u,v) = sigmoid(H[u] . H[v])

Gradients are derived by hand (see ``loss_and_grads``) and checked against
central finite differences in the test suite.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .miner import EdgeSample, EdgeSplits, SynergyGraph

log = logging.getLogger(__name__)

CLAMP_EPS = 1e-7


class TrainingError(RuntimeError):
    pass


@dataclass
class GcnParams:
    W1: np.ndarray
    W2: np.ndarray
    seed: int = 0

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.W1.shape[0], self.W1.shape[1], self.W2.shape[1]

    def copy(self) -> "GcnParams":
        return GcnParams(self.W1.copy(), self.W2.copy(), self.seed)


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden_dim: int = 128
    out_dim: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class TrainResult:
    params: GcnParams
    history: list[tuple[int, float, float | None]] = field(default_factory=list)
    adjacency: np.ndarray | None = None


@dataclass
class Ranking:
    anchor: int
    ranked: list[tuple[int, float]]

    @property
    def ids(self) -> list[int]:
        return [i for i, _ in self.ranked]


def _adjacency_from_edges(n: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    a = np.eye(n, dtype=np.float64)
    for u, v in edges:
        if u == v:
            continue
        a[u, v] = 1.0
        a[v, u] = 1.0
    return a


def normalize_adjacency(graph: SynergyGraph | int, edges: Iterable[tuple[int, int]] | None = None) -> np.ndarray:
    """Symmetric normalization with self-loops.

    Accepts a graph, or a node count plus an explicit edge list (used to
    build the train-only message-passing adjacency).
    """
    if isinstance(graph, SynergyGraph):
        n, edges = graph.node_count, graph.edges if edges is None else edges
    else:
        n, edges = int(graph), edges or ()
    if n < 1:
        raise ValueError("node_count must be >= 1")
    a = _adjacency_from_edges(n, edges)
    deg = a.sum(axis=1)
    # one sqrt of the degree product keeps simple cases exact (1/sqrt(4) == 0.5)
    return a / np.sqrt(np.outer(deg, deg))


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(d_in: int, d_hidden: int, d_out: int, seed: int) -> GcnParams:
    rng = np.random.default_rng(seed)
    w1 = glorot_uniform(rng, d_in, d_hidden)
    w2 = glorot_uniform(rng, d_hidden, d_out)
    return GcnParams(w1, w2, seed)


def _as_operator(adj):
    return adj if sp.issparse(adj) else np.asarray(adj, dtype=np.float64)


def _forward(params: GcnParams, adj, X: np.ndarray, ax: np.ndarray | None = None):
    if X.shape[0] != adj.shape[0]:
        raise ValueError(f"feature rows {X.shape[0]} != node count {adj.shape[0]}")
    if X.shape[1] != params.W1.shape[0]:
        raise ValueError(f"feature dim {X.shape[1]} != W1 input dim {params.W1.shape[0]}")
    if params.W1.shape[1] != params.W2.shape[0]:
        raise ValueError("W1/W2 hidden dims disagree")
    if ax is None:
        ax = adj @ X
    z1 = ax @ params.W1
    h1 = np.maximum(z1, 0.0)
    ah1 = adj @ h1
    h = ah1 @ params.W2
    return ax, z1, h1, ah1, h


def gcn_forward(params: GcnParams, adj, X: np.ndarray) -> np.ndarray:
    h = _forward(params, _as_operator(adj), np.asarray(X, dtype=np.float64))[-1]
    if not np.all(np.isfinite(h)):
        raise TrainingError("non-finite node embeddings")
    return h


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def score_edge(H: np.ndarray, u: int, v: int) -> float:
    return float(sigmoid(np.dot(H[u], H[v])))


def bce_loss(preds: Sequence[float], labels: Sequence[int], eps: float = CLAMP_EPS) -> float:
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("bce_loss of an empty sample set")
    p = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _sample_arrays(samples: Sequence[EdgeSample]):
    us = np.fromiter((s.u for s in samples), dtype=np.int64, count=len(samples))
    vs = np.fromiter((s.v for s in samples), dtype=np.int64, count=len(samples))
    ys = np.fromiter((s.label for s in samples), dtype=np.float64, count=len(samples))
    return us, vs, ys


def loss_and_grads(params: GcnParams, adj, X: np.ndarray, samples, ax: np.ndarray | None = None,
                   eps: float = CLAMP_EPS):
    """BCE loss over ``samples`` and its gradients w.r.t. W1 and W2.

    With s = h_u.h_v and p = sigmoid(s), dL/ds = (p - y)/N inside the clamp
    window and 0 where the clamp is active. Then
    dH[u] += g h_v, dH[v] += g h_u; dW2 = (A H1)^T dH;
    dH1 = A^T dH W2^T; dZ1 = dH1 * [Z1 > 0]; dW1 = (A X)^T dZ1.
    """
    adj = _as_operator(adj)
    us, vs, ys = samples if isinstance(samples, tuple) else _sample_arrays(samples)
    ax, z1, h1, ah1, h = _forward(params, adj, X, ax)
    s = np.einsum("ij,ij->i", h[us], h[vs])
    p = sigmoid(s)
    loss = bce_loss(p, ys, eps)

    n = len(ys)
    inside = (p > eps) & (p < 1.0 - eps)
    g = np.where(inside, (p - ys) / n, 0.0)
    dh = np.zeros_like(h)
    np.add.at(dh, us, g[:, None] * h[vs])
    np.add.at(dh, vs, g[:, None] * h[us])
    dw2 = ah1.T @ dh
    dh1 = adj.T @ (dh @ params.W2.T)
    dz1 = dh1 * (z1 > 0)
    dw1 = ax.T @ dz1
    return loss, dw1, dw2


class Adam:
    def __init__(self, shapes: Sequence[tuple[int, ...]], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for i, (w, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            w -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(graph: SynergyGraph, X: np.ndarray, splits: EdgeSplits, config: TrainConfig | None = None) -> TrainResult:
    """Full-batch training; message passing sees train positives only."""
    config = config or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != graph.node_count:
        raise ValueError(f"X has {X.shape[0]} rows, graph has {graph.node_count} nodes")
    if not splits.train:
        raise TrainingError("empty train split")

    adj_dense = normalize_adjacency(graph.node_count, splits.positives("train"))
    adj = sp.csr_matrix(adj_dense)
    ax = adj @ X
    params = init_params(X.shape[1], config.hidden_dim, config.out_dim, config.seed)
    opt = Adam([params.W1.shape, params.W2.shape], config.learning_rate,
               config.beta1, config.beta2, config.adam_eps)
    train_arr = _sample_arrays(splits.train)
    dev_arr = _sample_arrays(splits.dev) if splits.dev else None

    history: list[tuple[int, float, float | None]] = []
    for epoch in range(1, config.epochs + 1):
        loss, dw1, dw2 = loss_and_grads(params, adj, X, train_arr, ax=ax)
        if not (math.isfinite(loss) and np.all(np.isfinite(dw1)) and np.all(np.isfinite(dw2))):
            raise TrainingError(f"non-finite loss or gradient at epoch {epoch}")
        opt.step([params.W1, params.W2], [dw1, dw2])
        dev_loss = None
        if dev_arr is not None:
            h = _forward(params, adj, X, ax)[-1]
            us, vs, ys = dev_arr
            dev_loss = bce_loss(sigmoid(np.einsum("ij,ij->i", h[us], h[vs])), ys)
        history.append((epoch, loss, dev_loss))
        if epoch == 1 or epoch % 50 == 0 or epoch == config.epochs:
            log.debug("epoch %d train %.5f dev %s", epoch, loss, dev_loss)
    return TrainResult(params, history, adj_dense)


def node_embeddings(params: GcnParams, graph: SynergyGraph | np.ndarray, X: np.ndarray) -> np.ndarray:
    adj = graph if isinstance(graph, np.ndarray) or sp.issparse(graph) else normalize_adjacency(graph)
    return gcn_forward(params, adj, X)


def _rank(anchor: int, scores: np.ndarray, k: int, exclude: Iterable[int] = ()) -> Ranking:
    n = len(scores)
    if anchor < 0 or anchor >= n:
        raise ValueError(f"anchor {anchor} out of range")
    if k < 1:
        raise ValueError("k must be >= 1")
    mask = np.ones(n, dtype=bool)
    mask[anchor] = False
    for e in exclude:
        mask[e] = False
    cand = np.flatnonzero(mask)
    if cand.size == 0:
        raise ValueError("no ranking candidates")
    # lexsort: last key is primary; ties fall back to lower id
    order = cand[np.lexsort((cand, -scores[cand]))]
    top = order[:k]
    return Ranking(anchor, [(int(i), float(scores[i])) for i in top])


def top_k_synergy(params: GcnParams, graph: SynergyGraph | np.ndarray, X: np.ndarray, anchor: int, k: int = 5,
                  *, H: np.ndarray | None = None, exclude: Iterable[int] = ()) -> Ranking:
    """Rank partners of ``anchor`` by predicted edge probability.

    ``H`` may be passed to reuse one forward pass across many anchors.
    ``exclude`` removes known partners (filtered evaluation).
    """
    if H is None:
        H = node_embeddings(params, graph, X)
    scores = sigmoid(H @ H[anchor])
    return _rank(anchor, scores, k, exclude)


def top_k_semantic(X: np.ndarray, anchor: int, k: int = 5, *, exclude: Iterable[int] = ()) -> Ranking:
    X = np.asarray(X, dtype=np.float64)
    sq = np.einsum("ij,ij->i", X, X)
    if sq[anchor] == 0:
        raise ValueError("anchor has a zero feature vector")
    safe = np.where(sq == 0, 1.0, sq)
    scores = np.clip((X @ X[anchor]) / np.sqrt(safe * sq[anchor]), -1.0, 1.0)
    scores[sq == 0] = -1.0
    return _rank(anchor, scores, k, exclude)


def hit_at_k(rankings: Sequence[Ranking], truth: Mapping[int, set[int]], k: int) -> float:
    if not rankings:
        raise ValueError("no rankings")
    hits = 0
    for r in rankings:
        if r.anchor not in truth or not truth[r.anchor]:
            raise KeyError(f"anchor {r.anchor} missing from truth")
        if set(r.ids[:k]) & truth[r.anchor]:
            hits += 1
    return hits / len(rankings)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-based AUC (Mann-Whitney U), ties counted half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs both classes")
    allv = np.concatenate([pos, neg])
    order = np.argsort(allv, kind="mergesort")
    ranks = np.empty(len(allv))
    sorted_v = allv[order]
    i = 0
    while i < len(sorted_v):
        j = i
        while j + 1 < len(sorted_v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def held_out_truth(splits: EdgeSplits, split: str = "test") -> dict[int, set[int]]:
    truth: dict[int, set[int]] = {}
    for u, v in splits.positives(split):
        truth.setdefault(u, set()).add(v)
        truth.setdefault(v, set()).add(u)
    return truth


def evaluate(result: TrainResult, X: np.ndarray, splits: EdgeSplits, k: int = 5, split: str = "test") -> dict:
    """Held-out AUC, accuracy at 0.5, and filtered Hit@k for both rankers.

    Candidates exclude each anchor's train-split partners, so both rankers
    are scored only on unseen pairs.
    """
    adj = result.adjacency
    if adj is None:
        adj = normalize_adjacency(X.shape[0], splits.positives("train"))
    H = gcn_forward(result.params, adj, X)
    samples = getattr(splits, split)
    us, vs, ys = _sample_arrays(samples)
    probs = sigmoid(np.einsum("ij,ij->i", H[us], H[vs]))
    truth = held_out_truth(splits, split)
    train_nbrs: dict[int, set[int]] = {}
    for u, v in splits.positives("train"):
        train_nbrs.setdefault(u, set()).add(v)
        train_nbrs.setdefault(v, set()).add(u)
    syn, sem = [], []
    for anchor in sorted(truth):
        excl = train_nbrs.get(anchor, set())
        syn.append(top_k_synergy(result.params, adj, X, anchor, k, H=H, exclude=excl))
        sem.append(top_k_semantic(X, anchor, k, exclude=excl))
    return {
        "auc": roc_auc(probs, ys),
        "accuracy": float(np.mean((probs > 0.5) == (ys == 1))),
        "loss": bce_loss(probs, ys),
        f"hit@{k}_synergy": hit_at_k(syn, truth, k) if syn else float("nan"),
        f"hit@{k}_semantic": hit_at_k(sem, truth, k) if sem else float("nan"),
        "anchors": len(truth),
    }


def save_checkpoint(path: Path | str, params: GcnParams, config: TrainConfig | None = None) -> str:
    """Write header JSON then row-major weights; returns the file's sha256."""
    d_in, d_h, d_out = params.dims
    header = {"d_in": d_in, "d_hidden": d_h, "d_out": d_out, "seed": params.seed,
              "config": asdict(config) if config else None}
    lines = [json.dumps(header, sort_keys=True)]
    for w in (params.W1, params.W2):
        for row in w:
            lines.append(" ".join(repr(float(x)) for x in row))
    text = "\n".join(lines) + "\n"
    Path(path).write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_checkpoint(path: Path | str) -> tuple[GcnParams, dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    d_in, d_h, d_out = header["d_in"], header["d_hidden"], header["d_out"]
    rows = [np.array([float(x) for x in ln.split()]) for ln in lines[1:] if ln.strip()]
    if len(rows) != d_in + d_h:
        raise ValueError(f"{path}: expected {d_in + d_h} weight rows, found {len(rows)}")
    w1 = np.vstack(rows[:d_in])
    w2 = np.vstack(rows[d_in:])
    if w1.shape != (d_in, d_h) or w2.shape != (d_h, d_out):
        raise ValueError(f"{path}: weight shapes disagree with header")
    return GcnParams(w1, w2, header["seed"]), header


def write_history_csv(path: Path | str, history: Sequence[tuple[int, float, float | None]]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "dev_loss"])
        for epoch, tr, dv in history:
            w.writerow([epoch, repr(tr), "" if dv is None else repr(dv)])

"""Independent reference computations used as test oracles."""

import math

import numpy as np


def dense_norm_adj(n, edges):
    a = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for u, v in edges:
        a[u][v] = a[v][u] = 1.0
    deg = [sum(row) for row in a]
    return np.array([[a[i][j] / math.sqrt(deg[i] * deg[j]) for j in range(n)] for i in range(n)])


def loss(W1, W2, adj, X, samples, eps=1e-7):
    h1 = np.maximum(adj @ X @ W1, 0.0)
    H = adj @ h1 @ W2
    total = 0.0
    for u, v, y in samples:
        s = float(sum(H[u, k] * H[v, k] for k in range(H.shape[1])))
        p = 1.0 / (1.0 + math.exp(-s))
        p = min(max(p, eps), 1.0 - eps)
        total += -(y * math.log(p) + (1 - y) * math.log(1.0 - p))
    return total / len(samples)


def finite_difference(W1, W2, adj, X, samples, step=1e-5):
    grads = []
    for W in (W1, W2):
        g = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            orig = W[idx]
            W[idx] = orig + step
            up = loss(W1, W2, adj, X, samples)
            W[idx] = orig - step
            down = loss(W1, W2, adj, X, samples)
            W[idx] = orig
            g[idx] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def pairwise_auc(scores, labels):
    """Fraction of (positive, negative) pairs ranked correctly; ties count half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def random_instance(rng):
    n = int(rng.integers(3, 9))
    d_in, d_h, d_out = (int(x) for x in rng.integers(2, 7, size=3))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    mask = rng.random(len(pairs)) < 0.5
    edges = [p for p, m in zip(pairs, mask) if m]
    X = rng.normal(size=(n, d_in))
    k = int(rng.integers(2, len(pairs) + 1))
    chosen = rng.choice(len(pairs), size=k, replace=False)
    samples = [(pairs[i][0], pairs[i][1], int(rng.integers(0, 2))) for i in chosen]
    return n, (d_in, d_h, d_out), edges, X, samples


def relative_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))

"""Independent reference implementations used as test oracles.

These deliberately avoid the library's code paths: plain loops, dense
linear algebra, and grid searches only.
"""

import numpy as np

GRAM_EPS = 1e-3
GRAM_EPS_DEGENERATE = 1e-6


def knn_scan(queries, corpus, k, exclude_self=False):
    """Per-query linear scan with (distance, index) ordering."""
    queries = np.atleast_2d(np.asarray(queries, float))
    corpus = np.atleast_2d(np.asarray(corpus, float))
    all_idx, all_dist = [], []
    for q in queries:
        pairs = []
        for i, c in enumerate(corpus):
            d = float(np.sqrt(((q - c) ** 2).sum()))
            if exclude_self and d == 0.0:
                continue
            pairs.append((d, i))
        pairs.sort()
        all_idx.append([i for _, i in pairs[:k]])
        all_dist.append([d for d, _ in pairs[:k]])
    return np.asarray(all_idx), np.asarray(all_dist)


def hull_distance_segment_grid(color, c0, c1, step=1e-4):
    """Brute-force min over convex combinations of a 2-color palette."""
    ws = np.arange(0.0, 1.0 + step, step)
    pts = np.outer(1.0 - ws, c0) + np.outer(ws, c1)
    return float(np.sqrt(((pts - np.asarray(color)) ** 2).sum(axis=1)).min())


def hull_interior_points(palette_colors, count, rng):
    """Random convex combinations: points guaranteed inside the hull."""
    w = rng.dirichlet(np.ones(len(palette_colors)), size=count)
    return w @ np.asarray(palette_colors, float)


def hull_exterior_point(palette_colors, rng, margin=1e-3):
    """A point strictly outside the hull, at distance >= margin from it."""
    colors = np.asarray(palette_colors, float)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    support = colors @ d
    v = colors[int(np.argmax(support))]
    return v + margin * d


def lle_kkt(target, neighbors):
    """Equality-constrained least squares via a dense KKT system,
    using the same Gram regularization as the implementation."""
    nb = np.atleast_2d(np.asarray(neighbors, float))
    t = np.asarray(target, float).ravel()
    k = nb.shape[0]
    diffs = t[None, :] - nb
    g = diffs @ diffs.T
    tr = float(np.trace(g))
    eps = GRAM_EPS * tr if tr > 0.0 else GRAM_EPS_DEGENERATE
    g = g + eps * np.eye(k)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * g
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.solve(kkt, rhs)
    return sol[:k]


def dense_normal_system(w_dense, palette_colors, sp_colors, entries, params):
    """Explicit dense construction of the normal system, term by term.

    ``entries`` is a list of (superpixel, layer, target, weight) with the
    per-entry penalty weight already resolved.
    """
    w_dense = np.asarray(w_dense, float)
    colors = np.asarray(palette_colors, float)
    sp_colors = np.asarray(sp_colors, float)
    s = w_dense.shape[0]
    n = colors.shape[0]
    sn = s * n

    m = np.zeros((sn, sn))
    for j in range(n):
        m[j * s:(j + 1) * s, j * s:(j + 1) * s] = w_dense
    imm = np.eye(sn) - m

    r = np.zeros((3 * s, sn))
    for d in range(3):
        for j in range(n):
            r[d * s:(d + 1) * s, j * s:(j + 1) * s] = colors[j, d] * np.eye(s)
    b_hat = np.concatenate([sp_colors[:, d] for d in range(3)])

    u = np.zeros((s, sn))
    for j in range(n):
        u[:, j * s:(j + 1) * s] = np.eye(s)

    a = (params.lambda_m * imm.T @ imm
         + params.lambda_r * r.T @ r
         + params.lambda_u * u.T @ u)
    b = params.lambda_r * r.T @ b_hat + params.lambda_u * u.T @ np.ones(s)
    for sp_i, layer_j, target, weight in entries:
        flat = layer_j * s + sp_i
        a[flat, flat] += weight
        b[flat] += weight * target
    return a, b


def dense_replay_solve(w_dense, palette_colors, sp_colors, base_entries,
                       suppression_history, params):
    """Replay the solver's suppression schedule with dense direct solves."""
    s = np.asarray(w_dense).shape[0]
    n = np.asarray(palette_colors).shape[0]
    entries = list(base_entries)
    x = None
    for it in range(params.suppression_iters):
        a, b = dense_normal_system(w_dense, palette_colors, sp_colors, entries, params)
        x = np.linalg.solve(a, b)
        if it < len(suppression_history):
            for sp_i, layer_j in suppression_history[it]:
                entries.append((sp_i, layer_j, 0.0, params.lambda_n))
    return x

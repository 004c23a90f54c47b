"""Shared test utilities: oracle implementations and instance samplers."""

import itertools
import math

import numpy as np

from orbitqa.model import RegressionHead, init_params


def make_gradcheck_instance(seed, n=2, m=2, cs=15, ct=12, aligned=32,
                            kink_margin=1e-3, max_tries=500):
    """Random parameters plus data, resampled until every rectifier
    pre-activation clears the kink by a margin; central differences are
    meaningless within h of the kink for any implementation."""
    for attempt in range(max_tries):
        rng = np.random.default_rng((seed, attempt))
        weights, head = init_params(cs, ct, aligned, seed=int(rng.integers(1 << 31)))
        b1 = rng.uniform(-0.3, 0.3, size=head.b1.shape)
        head = RegressionHead(w1=head.w1, b1=b1, w2=head.w2, b2=head.b2)
        s = rng.uniform(0.0, 1.0, size=(n, m, cs))
        t = rng.uniform(0.0, 0.3, size=(n, m, ct))
        y = rng.uniform(1.0, 5.0, size=n)
        fused = np.concatenate([s @ weights.ws.T, t @ weights.wp.T], axis=-1)
        pre = fused @ head.w1.T + head.b1
        if np.abs(pre).min() > kink_margin:
            return s, t, y, weights, head
    raise AssertionError("could not sample a kink-free instance")


def loss_at(s, t, y, arrays):
    """Minimal forward pass used as the finite-difference target."""
    ws, wp, w1, b1, w2, b2 = arrays
    fused = np.concatenate([s @ ws.T, t @ wp.T], axis=-1)
    hidden = np.maximum(fused @ w1.T + b1, 0.0)
    q = (hidden @ w2.T)[..., 0] + b2[0]
    d = q.mean(axis=-1) - y
    return float(d @ d) / y.size


def rank_then_pearson(x, y):
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        out = [0.0] * len(v)
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            avg = (i + j) / 2 + 1
            for k in range(i, j + 1):
                out[order[k]] = avg
            i = j + 1
        return out

    rx, ry = ranks(list(x)), ranks(list(y))
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den


def pair_count_tau_b(x, y):
    n = len(x)
    concordant = discordant = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                tx += 1
                ty += 1
            elif dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) // 2
    return (concordant - discordant) / math.sqrt((n0 - tx) * (n0 - ty))


def brute_force_vmd(viewpoints):
    """Exhaustive max-min search in lexicographic order (first maximizer
    kept). Pairwise distances are precomputed; a partial min that cannot
    beat the incumbent prunes its subtree, which is sound because adding
    pairs never increases the min."""
    n = [len(v) for v in viewpoints]
    dist = {}
    for a in range(4):
        for b in range(a + 1, 4):
            va = np.asarray(viewpoints[a])
            vb = np.asarray(viewpoints[b])
            dist[a, b] = np.linalg.norm(va[:, None, :] - vb[None, :, :], axis=2).tolist()
    d01, d02, d03 = dist[0, 1], dist[0, 2], dist[0, 3]
    d12, d13, d23 = dist[1, 2], dist[1, 3], dist[2, 3]
    best_val = -1.0
    best = None
    for i in range(n[0]):
        d02_i, d03_i = d02[i], d03[i]
        for j in range(n[1]):
            m2 = d01[i][j]
            if m2 <= best_val:
                continue
            d12_j, d13_j = d12[j], d13[j]
            for k in range(n[2]):
                m3 = min(m2, d02_i[k], d12_j[k])
                if m3 <= best_val:
                    continue
                d23_k = d23[k]
                for l in range(n[3]):
                    val = min(m3, d03_i[l], d13_j[l], d23_k[l])
                    if val > best_val:
                        best_val = val
                        best = (i, j, k, l)
    return best


def brute_force_vmd_small(viewpoints, objective="max_min"):
    """Unpruned exhaustive scan for small instances, any clip count."""
    best_val = None
    best = None
    for combo in itertools.product(*[range(len(v)) for v in viewpoints]):
        pts = [viewpoints[ci][i] for ci, i in enumerate(combo)]
        dists = [math.dist(pts[a], pts[b])
                 for a, b in itertools.combinations(range(len(pts)), 2)]
        val = min(dists) if objective == "max_min" else sum(dists)
        if best_val is None or val > best_val:
            best_val, best = val, combo
    return best

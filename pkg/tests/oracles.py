"""Independent reference implementations used across the test suite.

Everything here is deliberately literal (loops, math.exp, sorting) and
stays decoupled from the library's vectorized paths.
"""

import math

import numpy as np


def brute_force_video_sets(batch, scores, best, tables, thr):
    """Apply the two strict threshold inequalities with a double loop."""
    b = len(batch)
    amb = set()
    for i in range(b):
        for j in range(b):
            if batch[j][1] == batch[i][1]:
                continue  # positive by video identity
            s = scores[i][j]
            u = (tables.u_q[batch[i][0]] + tables.u_v[batch[j][1], best[i][j]]) / 2.0
            if s > thr.tau_s and u > thr.tau_u:
                amb.add((i, j))
    return amb


def brute_force_frame_sets(batch, frame_sims, tables, thr):
    """Literal frame-level detection: (k_hat, ambiguous frames, ambiguous queries) per pair."""
    b, _, l_v = frame_sims.shape
    out = []
    for p in range(b):
        qi, vj = batch[p]
        f = frame_sims[p, p]
        k_hat = max(range(l_v), key=lambda k: (f[k], -k))
        amb = []
        for k in range(l_v):
            if k == k_hat:
                continue
            u_f = (tables.u_q[qi] + tables.u_v[vj, k]) / 2.0
            if f[k] > thr.tau_s and u_f > thr.tau_u:
                amb.append(k)
        amb_q = []
        for x in range(b):
            if batch[x][1] == vj:
                continue
            u = (tables.u_q[batch[x][0]] + tables.u_v[vj, k_hat]) / 2.0
            if frame_sims[x, p, k_hat] > thr.tau_s and u > thr.tau_u:
                amb_q.append(x)
        out.append((k_hat, set(amb), set(amb_q)))
    return out


def reference_single_positive(scores, i, direction="row"):
    """Standard one-positive contrastive loss via math.exp/log."""
    b = scores.shape[0]
    pos = math.exp(scores[i, i])
    if direction == "row":
        den = pos + sum(math.exp(scores[i, j]) for j in range(b) if j != i)
    else:
        den = pos + sum(math.exp(scores[x, i]) for x in range(b) if x != i)
    return -math.log(pos / den)


def exhaustive_recall(scores, pairing, ks=(1, 5, 10, 100)):
    """Sort-based recall@K with ties broken by lower video index."""
    n_q, n_v = scores.shape
    r = {k: 0 for k in ks}
    for i in range(n_q):
        order = sorted(range(n_v), key=lambda j: (-scores[i, j], j))
        rank = order.index(int(pairing[i])) + 1
        for k in ks:
            r[k] += rank <= k
    return {k: r[k] / n_q for k in ks}


def direct_uncertainty(m):
    """Eq.-literal double/triple loop averaging of a similarity map."""
    n_q, n_v, l_v = m.shape
    u_q = np.array([
        sum(m[x, y, z] for y in range(n_v) for z in range(l_v)) / (n_v * l_v)
        for x in range(n_q)
    ])
    u_v = np.array([
        [sum(m[x, y, z] for x in range(n_q)) / n_q for z in range(l_v)]
        for y in range(n_v)
    ])
    return u_q, u_v

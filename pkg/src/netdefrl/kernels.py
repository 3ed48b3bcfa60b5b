"""Hot inner loops, in two flavours.

Every kernel exists as an explicit loop written in the numba-compatible
subset (``*_loop``) and as a vectorised numpy equivalent (``*_numpy``).
The public names at the bottom of the module point at the jitted loops when
numba is enabled, and at the numpy versions otherwise.  Both flavours are
exported through :data:`NUMBA_IMPL` / :data:`NUMPY_IMPL` so tests and the
benchmark can compare them directly.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


# --------------------------------------------------------------------------
# breadth-first distances
# --------------------------------------------------------------------------

def bfs_distances_loop(indptr, nbr, nbr_link, src, dst, link_ok, node_ok, source):
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    dist[source] = 0
    queue[0] = source
    head = 0
    tail = 1
    while head < tail:
        x = queue[head]
        head += 1
        for e in range(indptr[x], indptr[x + 1]):
            y = nbr[e]
            if dist[y] < 0 and node_ok[y] and link_ok[nbr_link[e]]:
                dist[y] = dist[x] + 1
                queue[tail] = y
                tail += 1
    return dist


def bfs_distances_numpy(indptr, nbr, nbr_link, src, dst, link_ok, node_ok, source):
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    allowed = node_ok.copy()
    allowed[source] = True
    ok = link_ok & allowed[src] & allowed[dst]
    a = src[ok]
    b = dst[ok]
    level = 0
    frontier = dist == 0
    while frontier.any():
        nxt = np.zeros(n, dtype=np.bool_)
        nxt[b[frontier[a]]] = True
        nxt[a[frontier[b]]] = True
        nxt &= dist < 0
        level += 1
        dist[nxt] = level
        frontier = nxt
    return dist


# --------------------------------------------------------------------------
# attacker frontier
# --------------------------------------------------------------------------

def frontier_loop(src, dst, link_mask, compromised, isolated):
    out = np.zeros(compromised.shape[0], dtype=np.bool_)
    for e in range(src.shape[0]):
        if not link_mask[e]:
            continue
        a = src[e]
        b = dst[e]
        if compromised[a] and not compromised[b] and not isolated[b]:
            out[b] = True
        if compromised[b] and not compromised[a] and not isolated[a]:
            out[a] = True
    return out


def frontier_numpy(src, dst, link_mask, compromised, isolated):
    out = np.zeros(compromised.shape[0], dtype=np.bool_)
    clean = ~compromised & ~isolated
    out[dst[link_mask & compromised[src] & clean[dst]]] = True
    out[src[link_mask & compromised[dst] & clean[src]]] = True
    return out


# --------------------------------------------------------------------------
# stable top-k (sorted insertion with overflow removal)
# --------------------------------------------------------------------------

def topk_loop(scores, eligible, k, largest):
    keep = np.empty(k, dtype=np.int64)
    vals = np.empty(k, dtype=np.float64)
    m = 0
    if k <= 0:
        return keep[:0]
    for i in range(scores.shape[0]):
        if not eligible[i]:
            continue
        s = scores[i] if largest else -scores[i]
        if m == k and not s > vals[m - 1]:
            continue
        pos = 0
        while pos < m and vals[pos] >= s:
            pos += 1
        stop = m if m < k else k - 1
        for j in range(stop, pos, -1):
            keep[j] = keep[j - 1]
            vals[j] = vals[j - 1]
        keep[pos] = i
        vals[pos] = s
        if m < k:
            m += 1
    return keep[:m]


def topk_numpy(scores, eligible, k, largest):
    idx = np.flatnonzero(eligible)
    if k <= 0 or idx.size == 0:
        return np.empty(0, dtype=np.int64)
    key = -scores[idx] if largest else scores[idx]
    order = np.argsort(key, kind="stable")[:k]
    return idx[order].astype(np.int64)


# --------------------------------------------------------------------------
# proportional sampling
# --------------------------------------------------------------------------

def sumtree_set_loop(tree, leaves, values):
    size = tree.shape[0] // 2
    for j in range(leaves.shape[0]):
        i = leaves[j] + size
        tree[i] = values[j]
        i //= 2
        while i >= 1:
            tree[i] = tree[2 * i] + tree[2 * i + 1]
            i //= 2


def sumtree_find_loop(tree, u, n_filled):
    size = tree.shape[0] // 2
    out = np.empty(u.shape[0], dtype=np.int64)
    for j in range(u.shape[0]):
        x = u[j]
        i = 1
        while i < size:
            left = 2 * i
            if x < tree[left]:
                i = left
            else:
                x -= tree[left]
                i = left + 1
        leaf = i - size
        if leaf >= n_filled:
            leaf = n_filled - 1
        out[j] = leaf
    return out


def proportional_find_numpy(priorities, u, n_filled):
    cum = np.cumsum(priorities[:n_filled])
    out = np.searchsorted(cum, u, side="right").astype(np.int64)
    np.minimum(out, n_filled - 1, out=out)
    return out


# --------------------------------------------------------------------------
# fused Adam update on flat vectors
# --------------------------------------------------------------------------

def adam_update_loop(p, g, m, v, step, beta1, beta2, eps):
    for i in range(p.shape[0]):
        gi = g[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        p[i] -= step * m[i] / (np.sqrt(v[i]) + eps)


def adam_update_numpy(p, g, m, v, step, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= step * m / (np.sqrt(v) + eps)


NUMPY_IMPL = {
    "bfs_distances": bfs_distances_numpy,
    "frontier": frontier_numpy,
    "topk": topk_numpy,
    "adam_update": adam_update_numpy,
}

NUMBA_IMPL = {
    "bfs_distances": njit(bfs_distances_loop),
    "frontier": njit(frontier_loop),
    "topk": njit(topk_loop),
    "adam_update": njit(adam_update_loop),
    "sumtree_set": njit(sumtree_set_loop),
    "sumtree_find": njit(sumtree_find_loop),
}

_ACTIVE = NUMBA_IMPL if USE_NUMBA else NUMPY_IMPL

bfs_distances = _ACTIVE["bfs_distances"]
frontier = _ACTIVE["frontier"]
topk = _ACTIVE["topk"]
adam_update = _ACTIVE["adam_update"]
sumtree_set = NUMBA_IMPL["sumtree_set"]
sumtree_find = NUMBA_IMPL["sumtree_find"]

"""Compiled sheet-flood lifting with coincidence (union-find) processing.

Lifted nodes sit over base vertices; ``nbr[u * stride + s]`` is the lift of
the ``s``-th chain edge out of ``base[u]``.  Flooding a node ``u`` over ``a``
lifts the whole ball relator of witness ``a`` as a single sheet through
``u``; whenever a sheet meets a different lift over the same base vertex the
two are identified, which closes every loop lying in that ball.
"""

import heapq

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_BUDGET = 1


@njit(cache=True)
def _find(parent, u):
    r = u
    while parent[r] != r:
        r = parent[r]
    while parent[u] != r:
        nxt = parent[u]
        parent[u] = r
        u = nxt
    return r


@njit(cache=True)
def _merge_all(parent, base, nbr, dist, flooded, indptr, stride, qa, qb, nq, heap):
    """Process the coincidence queue ``qa/qb[:nq]`` to a fixpoint."""
    head = 0
    merges = 0
    while head < nq:
        x = _find(parent, qa[head])
        y = _find(parent, qb[head])
        head += 1
        if x == y:
            continue
        if y < x:
            x, y = y, x
        parent[y] = x
        merges += 1
        if dist[y] < dist[x]:
            dist[x] = dist[y]
            if not flooded[x]:
                heapq.heappush(heap, (dist[x], x))
        if flooded[y]:
            flooded[x] = True
        v = base[x]
        deg = indptr[v + 1] - indptr[v]
        for s in range(deg):
            ny = nbr[y * stride + s]
            if ny < 0:
                continue
            ny = _find(parent, ny)
            nx = nbr[x * stride + s]
            if nx < 0:
                nbr[x * stride + s] = ny
            else:
                nx = _find(parent, nx)
                if nx != ny:
                    if nq >= len(qa):
                        # grow queue
                        qa2 = np.empty(2 * len(qa), dtype=np.int64)
                        qb2 = np.empty(2 * len(qb), dtype=np.int64)
                        qa2[:nq] = qa[:nq]
                        qb2[:nq] = qb[:nq]
                        qa = qa2
                        qb = qb2
                    qa[nq] = nx
                    qb[nq] = ny
                    nq += 1
    return merges, qa, qb


@njit(cache=True, nogil=True)
def lift_cover(indptr, indices, lengths, rev, D, delta, basepoints, r_flood, max_nodes, jitter):
    n = len(indptr) - 1
    stride = 0
    for v in range(n):
        d = indptr[v + 1] - indptr[v]
        if d > stride:
            stride = d
    base = np.empty(max_nodes, dtype=np.int64)
    parent = np.empty(max_nodes, dtype=np.int64)
    dist = np.empty(max_nodes, dtype=np.float64)
    flooded = np.zeros(max_nodes, dtype=np.bool_)
    nbr = np.full(max_nodes * stride, -1, dtype=np.int64)
    qa = np.empty(1024, dtype=np.int64)
    qb = np.empty(1024, dtype=np.int64)

    sheet = np.full(n, -1, dtype=np.int64)
    sheet_stamp = np.zeros(n, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)

    heap = [(0.0, 0)]
    heap.pop()
    n_nodes = 0
    for b in basepoints:
        base[n_nodes] = b
        parent[n_nodes] = n_nodes
        dist[n_nodes] = 0.0
        heapq.heappush(heap, (jitter[b], n_nodes))
        n_nodes += 1

    status = STATUS_OK
    stamp = 0
    total_merges = 0
    while len(heap) > 0 and status == STATUS_OK:
        key, u = heapq.heappop(heap)
        u = _find(parent, u)
        if flooded[u] or dist[u] > r_flood:
            continue
        flooded[u] = True
        a = base[u]
        Da = D[a]
        stamp += 1
        sheet[a] = u
        sheet_stamp[a] = stamp
        top = 0
        stack[top] = a
        top += 1
        while top > 0 and status == STATUS_OK:
            top -= 1
            p = stack[top]
            dp = Da[p]
            k0 = indptr[p]
            pt = sheet[p]
            if parent[pt] != pt:
                pt = _find(parent, pt)
            for k in range(k0, indptr[p + 1]):
                x = indices[k]
                dx = Da[x]
                ell = lengths[k]
                if dx >= delta or 0.5 * (dp + dx + ell) >= delta:
                    continue
                slot = k - k0
                cur = nbr[pt * stride + slot]
                if cur >= 0 and parent[cur] != cur:
                    cur = _find(parent, cur)
                s = -1
                if sheet_stamp[x] == stamp:
                    s = sheet[x]
                    if parent[s] != s:
                        s = _find(parent, s)
                if cur >= 0 and cur == s:
                    # already lifted consistently: only relax the distance
                    nd = dist[pt] + ell
                    if nd < dist[s]:
                        dist[s] = nd
                        if not flooded[s]:
                            heapq.heappush(heap, (nd + jitter[x], s))
                    continue
                if cur < 0 and s < 0:
                    if n_nodes >= max_nodes:
                        status = STATUS_BUDGET
                        break
                    t = n_nodes
                    n_nodes += 1
                    base[t] = x
                    parent[t] = t
                    dist[t] = dist[pt] + ell
                    nbr[pt * stride + slot] = t
                    nbr[t * stride + (rev[k] - indptr[x])] = pt
                    heapq.heappush(heap, (dist[t] + jitter[x], t))
                    sheet[x] = t
                    sheet_stamp[x] = stamp
                    stack[top] = x
                    top += 1
                    continue
                nq = 0
                if cur < 0:
                    nbr[pt * stride + slot] = s
                    rs = rev[k] - indptr[x]
                    back = nbr[s * stride + rs]
                    if back < 0:
                        nbr[s * stride + rs] = pt
                    else:
                        back = _find(parent, back)
                        if back != pt:
                            qa[0] = back
                            qb[0] = pt
                            nq = 1
                    target = s
                elif s < 0:
                    sheet[x] = cur
                    sheet_stamp[x] = stamp
                    stack[top] = x
                    top += 1
                    target = cur
                else:
                    target = cur
                    qa[0] = cur
                    qb[0] = s
                    nq = 1
                if nq > 0:
                    m, qa, qb = _merge_all(parent, base, nbr, dist, flooded, indptr, stride, qa, qb, nq, heap)
                    total_merges += m
                    target = _find(parent, target)
                    pt = _find(parent, pt)
                nd = dist[pt] + ell
                if nd < dist[target]:
                    dist[target] = nd
                    if not flooded[target]:
                        heapq.heappush(heap, (nd + jitter[x], target))
    return status, n_nodes, base, parent, dist, flooded, nbr, stride, total_merges

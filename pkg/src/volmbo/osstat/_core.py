"""Hot loops of the order-statistic solvers.

State shared by all kernels (``n`` points, ``P`` clusters):

``u``      (n, P) float64 scores, read-only.
``m``      (P,) float64 current order-statistic candidate, moved in place.
``assign`` (n,) int64 cluster of every point; always ``m``-induced.
``vol``    (P,) int64 cluster sizes.
``heap``   (P, P, n) int32; ``heap[i, j, :hsize[i, j]]`` is a binary min-heap
           over the points of cluster ``j`` keyed by ``u[x, j] - u[x, i]``,
           ties by point id. The hyperplane between ``i`` and ``j`` sits at
           ``m[j] - m[i]``; keys never change, only the threshold moves.
``pos``    (n, P) int32; ``pos[x, i]`` is the slot of ``x`` in queue
           ``(i, assign[x])``.

Counters (int64 array, see the ``C_*`` indices) collect statistics; when
``debug`` is set, every swap-path is written to the trace buffers.
"""
import numpy as np

from .._jit import njit

C_OUTER_EQ = 0
C_OUTER_INT = 1
C_HEAP_OPS = 2
C_NTRACE = 3
C_GROWTH = 4
C_BAD_QUEUE = 5
N_COUNTERS = 6

STATUS_OK = 0
STATUS_NO_HIT = 1


@njit
def _less(u, i, j, a, b):
    ka = u[a, j] - u[a, i]
    kb = u[b, j] - u[b, i]
    if ka < kb:
        return True
    if ka > kb:
        return False
    return a < b


@njit
def _sift_up(u, heap, pos, i, j, k):
    x = heap[i, j, k]
    while k > 0:
        parent = (k - 1) // 2
        y = heap[i, j, parent]
        if _less(u, i, j, x, y):
            heap[i, j, k] = y
            pos[y, i] = k
            k = parent
        else:
            break
    heap[i, j, k] = x
    pos[x, i] = k


@njit
def _sift_down(u, heap, pos, size, i, j, k):
    x = heap[i, j, k]
    while True:
        child = 2 * k + 1
        if child >= size:
            break
        right = child + 1
        if right < size and _less(u, i, j, heap[i, j, right], heap[i, j, child]):
            child = right
        y = heap[i, j, child]
        if _less(u, i, j, y, x):
            heap[i, j, k] = y
            pos[y, i] = k
            k = child
        else:
            break
    heap[i, j, k] = x
    pos[x, i] = k


@njit
def _heap_push(u, heap, hsize, pos, i, j, x):
    k = hsize[i, j]
    hsize[i, j] = k + 1
    heap[i, j, k] = x
    pos[x, i] = k
    _sift_up(u, heap, pos, i, j, k)


@njit
def _heap_remove(u, heap, hsize, pos, i, j, x):
    k = pos[x, i]
    last = hsize[i, j] - 1
    hsize[i, j] = last
    pos[x, i] = -1
    if k != last:
        y = heap[i, j, last]
        heap[i, j, k] = y
        pos[y, i] = k
        _sift_up(u, heap, pos, i, j, k)
        _sift_down(u, heap, pos, last, i, j, pos[y, i])


@njit
def build_queues(u, assign):
    """All P(P-1) hyperplane queues, heapified bottom-up in O(nP)."""
    n, P = u.shape
    heap = np.empty((P, P, max(n, 1)), np.int32)
    hsize = np.zeros((P, P), np.int64)
    pos = np.full((n, P), -1, np.int32)
    for x in range(n):
        j = assign[x]
        for i in range(P):
            if i != j:
                k = hsize[i, j]
                heap[i, j, k] = x
                pos[x, i] = k
                hsize[i, j] = k + 1
    for j in range(P):
        for i in range(P):
            if i != j:
                size = hsize[i, j]
                for k in range(size // 2 - 1, -1, -1):
                    _sift_down(u, heap, pos, size, i, j, k)
    return heap, hsize, pos


@njit
def _move_point(u, assign, vol, heap, hsize, pos, x, src, dst):
    P = u.shape[1]
    for i in range(P):
        if i != src:
            _heap_remove(u, heap, hsize, pos, i, src, x)
    assign[x] = dst
    vol[src] -= 1
    vol[dst] += 1
    for i in range(P):
        if i != dst:
            _heap_push(u, heap, hsize, pos, i, dst, x)
    return 2 * (P - 1)


@njit
def _best_hit(u, m, in_tree, heap, hsize):
    # closest point of a non-tree cluster j to a hyperplane H_ij, i in tree
    P = u.shape[1]
    best = np.inf
    bi = -1
    bj = -1
    bx = -1
    for i in range(P):
        if not in_tree[i]:
            continue
        for j in range(P):
            if in_tree[j] or hsize[i, j] == 0:
                continue
            x = heap[i, j, 0]
            slack = (u[x, j] - u[x, i]) - (m[j] - m[i])
            if slack < best:
                best = slack
                bi = i
                bj = j
                bx = x
    return best, bi, bj, bx


@njit
def _move_m(m, in_tree, ntree, t):
    # m += t * d_T with d_T = (#T/(P-1)) 1 - (1 + 1/(P-1)) 1_T
    P = m.shape[0]
    base = ntree / (P - 1)
    c = 1.0 + 1.0 / (P - 1)
    for k in range(P):
        if in_tree[k]:
            m[k] += t * (base - c)
        else:
            m[k] += t * base


@njit
def queues_consistent(u, m, assign, vol, heap, hsize, pos, tol):
    """Exhaustive check of queue membership, heap order and separation."""
    P = u.shape[1]
    for j in range(P):
        for i in range(P):
            if i == j:
                continue
            size = hsize[i, j]
            if size != vol[j]:
                return False
            for k in range(size):
                x = heap[i, j, k]
                if assign[x] != j or pos[x, i] != k:
                    return False
                if k > 0 and _less(u, i, j, x, heap[i, j, (k - 1) // 2]):
                    return False
            if size > 0:
                x = heap[i, j, 0]
                if (u[x, j] - u[x, i]) - (m[j] - m[i]) < -tol:
                    return False
    return True


@njit
def _record_path(tr_path, tr_tree, tr_m, tr_gain, tr_meta, counters,
                 phase, leaf, stop, pred, bpoint, in_tree, m_before, m,
                 gain, predicted):
    it = counters[C_NTRACE]
    if it >= tr_path.shape[0]:
        return
    P = m.shape[0]
    k = leaf
    s = 0
    tr_path[it, 0, 0] = k
    while k != stop:
        tr_path[it, 1, s] = bpoint[k]
        k = pred[k]
        s += 1
        tr_path[it, 0, s] = k
    for p in range(P):
        tr_tree[it, p] = in_tree[p]
        tr_m[it, 0, p] = m_before[p]
        tr_m[it, 1, p] = m[p]
    tr_gain[it, 0] = gain
    tr_gain[it, 1] = predicted
    tr_meta[it, 0] = phase
    tr_meta[it, 1] = s
    counters[C_NTRACE] = it + 1


@njit
def equality_phase(u, V, m, assign, vol, heap, hsize, pos, tol, counters,
                   debug, tr_path, tr_tree, tr_m, tr_gain, tr_meta):
    """Drive the induced volumes to exactly ``V``; one swap-path per loop."""
    P = u.shape[1]
    c = 1.0 + 1.0 / (P - 1)
    in_tree = np.zeros(P, np.bool_)
    pred = np.full(P, -1, np.int64)
    bpoint = np.full(P, -1, np.int64)
    m_before = np.empty(P)
    while True:
        root = -1
        for i in range(P):
            if vol[i] < V[i]:
                root = i
                break
        if root < 0:
            return STATUS_OK
        for k in range(P):
            in_tree[k] = False
            pred[k] = -1
            bpoint[k] = -1
            m_before[k] = m[k]
        in_tree[root] = True
        ntree = 1
        leaf = -1
        while True:
            slack, bi, bj, bx = _best_hit(u, m, in_tree, heap, hsize)
            if bi < 0:
                return STATUS_NO_HIT
            counters[C_GROWTH] += 1
            t = slack / c if slack > 0.0 else 0.0
            _move_m(m, in_tree, ntree, t)
            in_tree[bj] = True
            ntree += 1
            pred[bj] = bi
            bpoint[bj] = bx
            if vol[bj] > V[bj]:
                leaf = bj
                break
        # the path ends at the first deficient ancestor, judged before any swap
        stop = pred[leaf]
        while vol[stop] >= V[stop]:
            stop = pred[stop]
        gain = 0.0
        k = leaf
        while k != stop:
            p = pred[k]
            x = bpoint[k]
            gain += u[x, p] - u[x, k]
            k = p
        if debug:
            _record_path(tr_path, tr_tree, tr_m, tr_gain, tr_meta, counters,
                         0, leaf, stop, pred, bpoint, in_tree, m_before, m,
                         gain, m[stop] - m[leaf])
        k = leaf
        while k != stop:
            p = pred[k]
            counters[C_HEAP_OPS] += _move_point(u, assign, vol, heap, hsize,
                                                pos, bpoint[k], k, p)
            k = p
        counters[C_OUTER_EQ] += 1
        if debug and not queues_consistent(u, m, assign, vol, heap, hsize,
                                           pos, tol):
            counters[C_BAD_QUEUE] += 1


@njit
def interval_phase(u, L, U, m, assign, vol, heap, hsize, pos, tol, counters,
                   debug, tr_path, tr_tree, tr_m, tr_gain, tr_meta):
    """Improve a feasible clustering by swap-paths of strictly positive gain.

    Roots are the clusters below their upper bound with maximal ``m``. The
    tree grows on three events: a point reaching a hyperplane, another
    under-full cluster catching up with the roots' ``m`` (it becomes a root),
    or the last above-lower-bound cluster outside the tree reaching the
    roots' ``m``, at which point no improving path is left and the loop ends.
    """
    P = u.shape[1]
    c = 1.0 + 1.0 / (P - 1)
    in_tree = np.zeros(P, np.bool_)
    pred = np.full(P, -1, np.int64)
    bpoint = np.full(P, -1, np.int64)
    m_before = np.empty(P)
    while True:
        mb = -np.inf
        mw = np.inf
        for p in range(P):
            if vol[p] < U[p] and m[p] > mb:
                mb = m[p]
            if vol[p] > L[p] and m[p] < mw:
                mw = m[p]
        if mb == -np.inf or mw == np.inf or mb - mw <= tol:
            return STATUS_OK
        ntree = 0
        r0 = -1
        for k in range(P):
            pred[k] = -1
            bpoint[k] = -1
            m_before[k] = m[k]
            in_tree[k] = vol[k] < U[k] and m[k] >= mb - tol
            if in_tree[k]:
                ntree += 1
                if r0 < 0:
                    r0 = k
        leaf = -1
        while ntree < P:
            slack, bi, bj, bx = _best_hit(u, m, in_tree, heap, hsize)
            ta = np.inf
            if bi >= 0:
                ta = slack / c if slack > 0.0 else 0.0
            # tc: time until the lowest shrinkable cluster outside the tree
            # climbs to the roots; afterwards the optimality criterion holds
            tb = np.inf
            jb = -1
            tc = -np.inf
            for j in range(P):
                if in_tree[j]:
                    continue
                gap = (m[r0] - m[j]) / c
                if vol[j] < U[j] and gap < tb:
                    tb = gap
                    jb = j
                if vol[j] > L[j] and gap > tc:
                    tc = gap
            if tc <= ta and tc <= tb:
                if tc > 0.0:
                    _move_m(m, in_tree, ntree, tc)
                break
            counters[C_GROWTH] += 1
            if tb <= ta:
                _move_m(m, in_tree, ntree, max(tb, 0.0))
                in_tree[jb] = True
                ntree += 1
                continue
            _move_m(m, in_tree, ntree, ta)
            in_tree[bj] = True
            ntree += 1
            pred[bj] = bi
            bpoint[bj] = bx
            if vol[bj] > L[bj] and m[bj] < m[r0] - tol:
                leaf = bj
                break
        if leaf < 0:
            return STATUS_OK
        stop = leaf
        while pred[stop] >= 0:
            stop = pred[stop]
        gain = 0.0
        k = leaf
        while k != stop:
            p = pred[k]
            x = bpoint[k]
            gain += u[x, p] - u[x, k]
            k = p
        if debug:
            _record_path(tr_path, tr_tree, tr_m, tr_gain, tr_meta, counters,
                         1, leaf, stop, pred, bpoint, in_tree, m_before, m,
                         gain, m[stop] - m[leaf])
        k = leaf
        while k != stop:
            p = pred[k]
            counters[C_HEAP_OPS] += _move_point(u, assign, vol, heap, hsize,
                                                pos, bpoint[k], k, p)
            k = p
        counters[C_OUTER_INT] += 1
        if debug and not queues_consistent(u, m, assign, vol, heap, hsize,
                                           pos, tol):
            counters[C_BAD_QUEUE] += 1


@njit
def induced_assign(u, m):
    """argmax_i u[x, i] - m[i], lowest index on ties."""
    n, P = u.shape
    out = np.empty(n, np.int64)
    for x in range(n):
        best = u[x, 0] - m[0]
        bi = 0
        for i in range(1, P):
            v = u[x, i] - m[i]
            if v > best:
                best = v
                bi = i
        out[x] = bi
    return out

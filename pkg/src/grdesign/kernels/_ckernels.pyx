# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid kernels. Signatures mirror ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()

cdef int[4] DR = [-1, 1, 0, 0]
cdef int[4] DC = [0, 0, -1, 1]
cdef double TIE_TOL = 1e-9


cdef void _bfs(const unsigned char[::1] free, int h, int w, int src,
               int[::1] dist, int[::1] queue) noexcept nogil:
    cdef int n = h * w
    cdef int i, head = 0, tail = 0, cur, r, c, a, nr, nc, nxt
    for i in range(n):
        dist[i] = -1
    if free[src] == 0:
        return
    dist[src] = 0
    queue[tail] = src
    tail += 1
    while head < tail:
        cur = queue[head]
        head += 1
        r = cur // w
        c = cur - r * w
        for a in range(4):
            nr = r + DR[a]
            nc = c + DC[a]
            if nr < 0 or nr >= h or nc < 0 or nc >= w:
                continue
            nxt = nr * w + nc
            if free[nxt] and dist[nxt] < 0:
                dist[nxt] = dist[cur] + 1
                queue[tail] = nxt
                tail += 1


def bfs(const unsigned char[::1] free, int h, int w, int src):
    dist = np.empty(h * w, dtype=np.int32)
    queue = np.empty(h * w, dtype=np.int32)
    cdef int[::1] d = dist
    cdef int[::1] q = queue
    _bfs(free, h, w, src, d, q)
    return dist


cdef int _pair_depth(int h, int w, int start,
                     int[::1] ds_a, int[::1] dg_a, int total_a,
                     int[::1] ds_b, int[::1] dg_b, int total_b,
                     int[::1] depth, int[::1] queue) noexcept nogil:
    cdef int n = h * w
    cdef int i, head = 0, tail = 0, cur, r, c, a, nr, nc, nxt, best = 0
    for i in range(n):
        depth[i] = -1
    depth[start] = 0
    queue[tail] = start
    tail += 1
    while head < tail:
        cur = queue[head]
        head += 1
        if depth[cur] > best:
            best = depth[cur]
        r = cur // w
        c = cur - r * w
        for a in range(4):
            nr = r + DR[a]
            nc = c + DC[a]
            if nr < 0 or nr >= h or nc < 0 or nc >= w:
                continue
            nxt = nr * w + nc
            if depth[nxt] >= 0:
                continue
            if dg_a[nxt] < 0 or dg_b[nxt] < 0:
                continue
            if ds_a[cur] + 1 + dg_a[nxt] != total_a:
                continue
            if ds_b[cur] + 1 + dg_b[nxt] != total_b:
                continue
            depth[nxt] = depth[cur] + 1
            queue[tail] = nxt
            tail += 1
    return best


def worstcase_wcd(const unsigned char[::1] free, int h, int w, int start,
                  const int[::1] goals):
    """Return ``(value, i, j)``; value is -1 when some goal is unreachable."""
    cdef int n = h * w
    cdef int k = goals.shape[0]
    cdef int i, j, g, v, best = -1, bi = 0, bj = 1
    own = np.empty((k, n), dtype=np.uint8)
    ds = np.empty((k, n), dtype=np.int32)
    dg = np.empty((k, n), dtype=np.int32)
    cdef unsigned char[:, ::1] own_v = own
    cdef int[:, ::1] ds_v = ds
    cdef int[:, ::1] dg_v = dg
    cdef int[::1] queue = np.empty(n, dtype=np.int32)
    cdef int[::1] depth = np.empty(n, dtype=np.int32)
    cdef int[::1] totals = np.empty(k, dtype=np.int32)
    for i in range(k):
        own_v[i, :] = free
        for j in range(k):
            if j != i:
                own_v[i, goals[j]] = 0
        _bfs(own_v[i], h, w, start, ds_v[i], queue)
        _bfs(own_v[i], h, w, goals[i], dg_v[i], queue)
        totals[i] = ds_v[i, goals[i]]
        if totals[i] < 0:
            return -1, -1, -1
    for i in range(k):
        for j in range(i + 1, k):
            v = _pair_depth(h, w, start, ds_v[i], dg_v[i], totals[i],
                            ds_v[j], dg_v[j], totals[j], depth, queue)
            if v > best:
                best = v
                bi = i
                bj = j
    return best, bi, bj


def shortest_path_actions(const unsigned char[::1] free, int h, int w,
                          int start, int goal):
    """Tie-broken shortest path as an int8 action array, or None."""
    cdef int n = h * w
    dist = np.empty(n, dtype=np.int32)
    cdef int[::1] d = dist
    cdef int[::1] queue = np.empty(n, dtype=np.int32)
    _bfs(free, h, w, goal, d, queue)
    if d[start] < 0:
        return None
    cdef int steps = d[start]
    out = np.empty(steps, dtype=np.int8)
    cdef signed char[::1] o = out
    cdef int cur = start, t, a, r, c, nr, nc, nxt
    for t in range(steps):
        r = cur // w
        c = cur - r * w
        for a in range(4):
            nr = r + DR[a]
            nc = c + DC[a]
            if nr < 0 or nr >= h or nc < 0 or nc >= w:
                continue
            nxt = nr * w + nc
            if d[nxt] == d[cur] - 1 and (free[nxt] or nxt == goal):
                o[t] = a
                cur = nxt
                break
    return out


def plan_policy(const unsigned char[::1] free, int h, int w, int goal,
                const int[::1] sub_bit, const double[::1] sub_reward,
                double goal_reward, const double[::1] discounts, int horizon):
    """Finite-horizon DP over (time, cell, collected-mask).

    Returns ``(policy, value0, arrival0)``. ``policy[t, cell, mask]`` is the
    chosen action (-1 when the goal cannot be reached in time).
    """
    cdef int n = h * w
    cdef int m = sub_reward.shape[0]
    cdef int M = 1 << m
    policy = np.full((horizon, n, M), -1, dtype=np.int8)
    cdef signed char[:, :, ::1] pol = policy
    cdef double[:, ::1] v_next = np.full((n, M), -INFINITY)
    cdef double[:, ::1] v_cur = np.full((n, M), -INFINITY)
    cdef int[:, ::1] a_next = np.full((n, M), 2 ** 30, dtype=np.int32)
    cdef int[:, ::1] a_cur = np.full((n, M), 2 ** 30, dtype=np.int32)
    cdef double[:, ::1] tmp_v
    cdef int[:, ::1] tmp_a
    cdef int t, cell, mask, a, r, c, nr, nc, nxt, bit, nmask, arr, best_arr, best_a
    cdef double val, best_v
    for t in range(horizon - 1, -1, -1):
        for cell in range(n):
            if free[cell] == 0 or cell == goal:
                for mask in range(M):
                    v_cur[cell, mask] = -INFINITY
                    a_cur[cell, mask] = 2 ** 30
                continue
            r = cell // w
            c = cell - r * w
            for mask in range(M):
                best_v = -INFINITY
                best_arr = 2 ** 30
                best_a = -1
                for a in range(4):
                    nr = r + DR[a]
                    nc = c + DC[a]
                    if nr < 0 or nr >= h or nc < 0 or nc >= w:
                        continue
                    nxt = nr * w + nc
                    if nxt == goal:
                        val = goal_reward * discounts[t + 1]
                        arr = t + 1
                    elif free[nxt]:
                        bit = sub_bit[nxt]
                        if bit >= 0 and not (mask >> bit) & 1:
                            nmask = mask | (1 << bit)
                            val = sub_reward[bit] * discounts[t + 1] + v_next[nxt, nmask]
                        else:
                            nmask = mask
                            val = v_next[nxt, nmask]
                        arr = a_next[nxt, nmask]
                    else:
                        continue
                    if val == -INFINITY:
                        continue
                    if best_a < 0 or val > best_v + TIE_TOL:
                        best_v = val
                        best_arr = arr
                        best_a = a
                    elif fabs(val - best_v) <= TIE_TOL and arr < best_arr:
                        best_v = val
                        best_arr = arr
                        best_a = a
                v_cur[cell, mask] = best_v
                a_cur[cell, mask] = best_arr
                pol[t, cell, mask] = best_a
        tmp_v = v_next
        v_next = v_cur
        v_cur = tmp_v
        tmp_a = a_next
        a_next = a_cur
        a_cur = tmp_a
    return policy, np.asarray(v_next).copy(), np.asarray(a_next).copy()

"""Pure-Python grid kernels, used when the compiled extension is unavailable.

Grids are flattened row-major; ``free`` is a uint8 array with 1 where a cell
can be entered. Actions are indexed Up, Down, Left, Right.
"""
from __future__ import annotations

from collections import deque

import numpy as np

DR = (-1, 1, 0, 0)
DC = (0, 0, -1, 1)
TIE_TOL = 1e-9
_FAR = 2**30


def _neighbors(cell: int, h: int, w: int):
    r, c = divmod(cell, w)
    for a in range(4):
        nr, nc = r + DR[a], c + DC[a]
        if 0 <= nr < h and 0 <= nc < w:
            yield a, nr * w + nc


def bfs(free, h: int, w: int, src: int) -> np.ndarray:
    dist = np.full(h * w, -1, dtype=np.int32)
    if not free[src]:
        return dist
    dist[src] = 0
    queue = deque([src])
    while queue:
        cur = queue.popleft()
        for _, nxt in _neighbors(cur, h, w):
            if free[nxt] and dist[nxt] < 0:
                dist[nxt] = dist[cur] + 1
                queue.append(nxt)
    return dist


def _pair_depth(h, w, start, ds_a, dg_a, total_a, ds_b, dg_b, total_b) -> int:
    depth = {start: 0}
    best = 0
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        best = max(best, depth[cur])
        for _, nxt in _neighbors(cur, h, w):
            if nxt in depth or dg_a[nxt] < 0 or dg_b[nxt] < 0:
                continue
            if ds_a[cur] + 1 + dg_a[nxt] != total_a:
                continue
            if ds_b[cur] + 1 + dg_b[nxt] != total_b:
                continue
            depth[nxt] = depth[cur] + 1
            queue.append(nxt)
    return best


def worstcase_wcd(free, h: int, w: int, start: int, goals) -> tuple[int, int, int]:
    """Return ``(value, i, j)``; value is -1 when some goal is unreachable."""
    k = len(goals)
    ds, dg, totals = [], [], []
    for i in range(k):
        own = np.array(free, dtype=np.uint8)
        for j in range(k):
            if j != i:
                own[goals[j]] = 0
        ds.append(bfs(own, h, w, start))
        dg.append(bfs(own, h, w, int(goals[i])))
        totals.append(int(ds[i][goals[i]]))
        if totals[i] < 0:
            return -1, -1, -1
    best, bi, bj = -1, 0, 1
    for i in range(k):
        for j in range(i + 1, k):
            v = _pair_depth(h, w, start, ds[i], dg[i], totals[i], ds[j], dg[j], totals[j])
            if v > best:
                best, bi, bj = v, i, j
    return best, bi, bj


def shortest_path_actions(free, h: int, w: int, start: int, goal: int):
    d = bfs(free, h, w, goal)
    if d[start] < 0:
        return None
    out = np.empty(int(d[start]), dtype=np.int8)
    cur = start
    for t in range(len(out)):
        for a, nxt in _neighbors(cur, h, w):
            if d[nxt] == d[cur] - 1 and (free[nxt] or nxt == goal):
                out[t] = a
                cur = nxt
                break
    return out


def plan_policy(free, h, w, goal, sub_bit, sub_reward, goal_reward, discounts, horizon):
    n = h * w
    m = len(sub_reward)
    big_m = 1 << m
    policy = np.full((horizon, n, big_m), -1, dtype=np.int8)
    v_next = np.full((n, big_m), -np.inf)
    a_next = np.full((n, big_m), _FAR, dtype=np.int32)
    for t in range(horizon - 1, -1, -1):
        v_cur = np.full((n, big_m), -np.inf)
        a_cur = np.full((n, big_m), _FAR, dtype=np.int32)
        for cell in range(n):
            if not free[cell] or cell == goal:
                continue
            moves = list(_neighbors(cell, h, w))
            for mask in range(big_m):
                best_v, best_arr, best_a = -np.inf, _FAR, -1
                for a, nxt in moves:
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
                    if val == -np.inf:
                        continue
                    if best_a < 0 or val > best_v + TIE_TOL:
                        best_v, best_arr, best_a = val, arr, a
                    elif abs(val - best_v) <= TIE_TOL and arr < best_arr:
                        best_v, best_arr, best_a = val, arr, a
                v_cur[cell, mask] = best_v
                a_cur[cell, mask] = best_arr
                policy[t, cell, mask] = best_a
        v_next, a_next = v_cur, a_cur
    return policy, v_next.copy(), a_next.copy()

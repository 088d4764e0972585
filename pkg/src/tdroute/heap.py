"""Quaternary min-heap over vertex IDs with decrease/increase-key by position.

Ordering is by ``(key, id)`` so pop sequences are reproducible. ``pos[v]`` is
``-1`` when ``v`` is not queued; callers must keep it that way between uses
(see :func:`heap_clear`).
"""
import numpy as np
from numba import njit

ARITY = 4


@njit(cache=True, inline="always")
def _less(keys, ids, i, j):
    return keys[i] < keys[j] or (keys[i] == keys[j] and ids[i] < ids[j])


@njit(cache=True)
def _sift_up(keys, ids, pos, i):
    k = keys[i]
    v = ids[i]
    while i > 0:
        p = (i - 1) // ARITY
        if keys[p] < k or (keys[p] == k and ids[p] < v):
            break
        keys[i] = keys[p]
        ids[i] = ids[p]
        pos[ids[i]] = i
        i = p
    keys[i] = k
    ids[i] = v
    pos[v] = i


@njit(cache=True)
def _sift_down(keys, ids, pos, size, i):
    k = keys[i]
    v = ids[i]
    while True:
        c = ARITY * i + 1
        if c >= size:
            break
        best = c
        end = min(c + ARITY, size)
        for j in range(c + 1, end):
            if _less(keys, ids, j, best):
                best = j
        if keys[best] > k or (keys[best] == k and ids[best] > v):
            break
        keys[i] = keys[best]
        ids[i] = ids[best]
        pos[ids[i]] = i
        i = best
    keys[i] = k
    ids[i] = v
    pos[v] = i


@njit(cache=True)
def heap_push(keys, ids, pos, size, v, key):
    keys[size] = key
    ids[size] = v
    pos[v] = size
    _sift_up(keys, ids, pos, size)
    return size + 1


@njit(cache=True)
def heap_update(keys, ids, pos, size, v, key):
    i = pos[v]
    old = keys[i]
    keys[i] = key
    if key < old:
        _sift_up(keys, ids, pos, i)
    elif key > old:
        _sift_down(keys, ids, pos, size, i)


@njit(cache=True)
def heap_pop(keys, ids, pos, size):
    """Remove the minimum; returns ``(vertex, key, new_size)``."""
    v = ids[0]
    k = keys[0]
    pos[v] = -1
    size -= 1
    if size > 0:
        keys[0] = keys[size]
        ids[0] = ids[size]
        pos[ids[0]] = 0
        _sift_down(keys, ids, pos, size, 0)
    return v, k, size


@njit(cache=True)
def heap_clear(ids, pos, size):
    for i in range(size):
        pos[ids[i]] = -1
    return 0


class Heap:
    """Python-facing wrapper, mostly for tests."""

    def __init__(self, capacity: int):
        self.keys = np.zeros(capacity, dtype=np.int64)
        self.ids = np.zeros(capacity, dtype=np.int32)
        self.pos = np.full(capacity, -1, dtype=np.int32)
        self.size = 0

    def __len__(self):
        return self.size

    def __contains__(self, v):
        return self.pos[v] >= 0

    def push_or_update(self, v: int, key: int) -> None:
        if self.pos[v] >= 0:
            heap_update(self.keys, self.ids, self.pos, self.size, v, key)
        else:
            self.size = heap_push(self.keys, self.ids, self.pos, self.size, v, key)

    def pop(self) -> tuple[int, int]:
        v, k, self.size = heap_pop(self.keys, self.ids, self.pos, self.size)
        return int(v), int(k)

"""Exact goal-distance tables, built once by breadth-first search and cached
on disk.

The cache directory comes from the XOT_TABLE_DIR environment variable and
defaults to ~/.cache/xot/tables. Files use a small binary container: magic
"XOTD", a format version byte, a little-endian uint64 entry count, then the
packed payload. A missing or unreadable file is simply rebuilt.
"""

from __future__ import annotations

import itertools
import logging
import os
import struct

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"XOTD"
FORMAT_VERSION = 1
UNREACHABLE = 255

PUZZLE8_STATES = 362880  # 9!
PUZZLE8_REACHABLE = 181440
CUBE_ORBIT = 3674160  # 7! * 3**6

_puzzle8_cache = None
_cube_cache = None


def table_dir() -> str:
    return os.environ.get("XOT_TABLE_DIR") or os.path.join(
        os.path.expanduser("~"), ".cache", "xot", "tables"
    )


def _read_payload(path: str, expected_entries=None):
    with open(path, "rb") as fh:
        header = fh.read(13)
        if len(header) != 13 or header[:4] != MAGIC:
            raise ValueError("bad magic")
        if header[4] != FORMAT_VERSION:
            raise ValueError(f"unsupported table version {header[4]}")
        (entries,) = struct.unpack("<Q", header[5:13])
        if expected_entries is not None and entries != expected_entries:
            raise ValueError(f"entry count {entries} != expected {expected_entries}")
        return entries, fh.read()


def _write_payload(path: str, entries: int, payload: bytes):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<Q", entries))
        fh.write(payload)
    os.replace(tmp, path)


def _build_puzzle8() -> np.ndarray:
    """Distance from every tile permutation to the goal; 255 marks the odd
    (unreachable) half of the permutation space."""
    perms = np.array(list(itertools.permutations(range(9))), dtype=np.int8)

    import math

    weights = np.array([math.factorial(8 - i) for i in range(9)], dtype=np.int64)

    def rank_rows(rows):
        # Lexicographic (Lehmer) rank; itertools.permutations enumerates in
        # the same order, so rank doubles as an index into `perms`.
        n = rows.shape[0]
        r = np.zeros(n, dtype=np.int64)
        for i in range(9):
            smaller = np.zeros(n, dtype=np.int64)
            for j in range(i + 1, 9):
                smaller += rows[:, j] < rows[:, i]
            r += smaller * weights[i]
        return r

    blank = np.argmax(perms == 0, axis=1)
    row, col = blank // 3, blank % 3
    neighbors = np.full((PUZZLE8_STATES, 4), -1, dtype=np.int64)
    deltas = ((0, -1), (0, 1), (-1, 0), (1, 0))  # Left, Right, Up, Down
    for a, (dr, dc) in enumerate(deltas):
        ok = (row + dr >= 0) & (row + dr <= 2) & (col + dc >= 0) & (col + dc <= 2)
        target = blank + dr * 3 + dc
        swapped = perms.copy()
        rows_ok = np.nonzero(ok)[0]
        swapped[rows_ok, blank[rows_ok]] = perms[rows_ok, target[rows_ok]]
        swapped[rows_ok, target[rows_ok]] = 0
        ranks = rank_rows(swapped[rows_ok])
        neighbors[rows_ok, a] = ranks

    dist = np.full(PUZZLE8_STATES, UNREACHABLE, dtype=np.uint8)
    dist[0] = 0  # the goal permutation (0,1,...,8) has rank 0
    frontier = np.array([0], dtype=np.int64)
    d = 0
    while frontier.size:
        d += 1
        nxt = neighbors[frontier].ravel()
        nxt = nxt[nxt >= 0]
        nxt = np.unique(nxt)
        nxt = nxt[dist[nxt] == UNREACHABLE]
        dist[nxt] = d
        frontier = nxt
    return dist


def _cube_keys(states: np.ndarray) -> np.ndarray:
    keys = np.zeros(states.shape[0], dtype=np.uint64)
    for i in range(23, -1, -1):
        keys = keys * np.uint64(6) + states[:, i].astype(np.uint64)
    return keys


def _build_cube():
    """Distances over the orbit of the base coloring under the nine solver
    moves, keyed by base-6 sticker encoding (sorted)."""
    from . import cube

    move_perms = [np.array(cube.MOVE_PERMS[m], dtype=np.int64) for m in cube.SOLVER_MOVES]
    base = np.array(cube.BASE_STATE, dtype=np.uint8).reshape(1, 24)

    all_keys = [_cube_keys(base)]
    all_dists = [np.zeros(1, dtype=np.uint8)]
    seen = all_keys[0].copy()
    frontier = base
    d = 0
    while frontier.size:
        d += 1
        new_keys_parts, new_state_parts = [], []
        for perm in move_perms:
            cand = frontier[:, perm]
            keys = _cube_keys(cand)
            fresh = ~_member_sorted(keys, seen)
            if new_keys_parts:
                fresh &= ~_member_sorted(keys, np.sort(np.concatenate(new_keys_parts)))
            if fresh.any():
                new_keys_parts.append(keys[fresh])
                new_state_parts.append(cand[fresh])
        if not new_keys_parts:
            break
        keys = np.concatenate(new_keys_parts)
        states = np.concatenate(new_state_parts)
        uniq, first = np.unique(keys, return_index=True)
        all_keys.append(uniq)
        all_dists.append(np.full(uniq.size, d, dtype=np.uint8))
        seen = np.union1d(seen, uniq)
        frontier = states[first]

    keys = np.concatenate(all_keys)
    dists = np.concatenate(all_dists)
    order = np.argsort(keys)
    return keys[order], dists[order]


def _member_sorted(values: np.ndarray, sorted_ref: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(sorted_ref, values)
    idx = np.minimum(idx, sorted_ref.size - 1)
    return sorted_ref[idx] == values if sorted_ref.size else np.zeros(values.shape, dtype=bool)


def puzzle8_distances() -> np.ndarray:
    global _puzzle8_cache
    if _puzzle8_cache is not None:
        return _puzzle8_cache
    path = os.path.join(table_dir(), "puzzle8_dist.xotd")
    if os.path.exists(path):
        try:
            _, payload = _read_payload(path, PUZZLE8_STATES)
            _puzzle8_cache = np.frombuffer(payload, dtype=np.uint8).copy()
            return _puzzle8_cache
        except (ValueError, OSError) as exc:
            logger.warning("rebuilding %s: %s", path, exc)
    logger.info("building 8-puzzle distance table (one-time)")
    dist = _build_puzzle8()
    _write_payload(path, PUZZLE8_STATES, dist.tobytes())
    _puzzle8_cache = dist
    return dist


def cube_distances():
    global _cube_cache
    if _cube_cache is not None:
        return _cube_cache
    path = os.path.join(table_dir(), "cube_dist.xotd")
    if os.path.exists(path):
        try:
            n, payload = _read_payload(path, CUBE_ORBIT)
            keys = np.frombuffer(payload[: n * 8], dtype=np.uint64).copy()
            dists = np.frombuffer(payload[n * 8:], dtype=np.uint8).copy()
            if dists.size != n:
                raise ValueError("truncated payload")
            _cube_cache = (keys, dists)
            return _cube_cache
        except (ValueError, OSError) as exc:
            logger.warning("rebuilding %s: %s", path, exc)
    logger.info("building pocket-cube distance table (one-time, ~1 minute)")
    keys, dists = _build_cube()
    _write_payload(path, keys.size, keys.tobytes() + dists.tobytes())
    _cube_cache = (keys, dists)
    return _cube_cache

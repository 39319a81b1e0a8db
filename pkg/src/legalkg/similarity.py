"""Indel-distance similarity and exhaustive partial-alignment similarity.

``indel_ratio(a, b) = 100 * (1 - D / (|a| + |b|))`` where ``D`` is the
insert/delete edit distance (a substitution costs 2). ``partial_ratio``
is the best ``indel_ratio`` between the shorter string and any contiguous
substring of the longer one. Both compare canonical (trimmed, collapsed,
uppercased) forms.

The substring scan is exhaustive but pruned in ways that cannot change the
maximum: a window never starts on a character missing from the shorter
string when dropping it leaves a valid window (trimming an unmatched edge
character never lowers the score), and a window stops growing once its best
possible score falls below the best found so far. LCS lengths for all windows sharing a start come from one
bit-parallel sweep.
"""

from __future__ import annotations

from legalkg.schema import normalize_name


def _score(dist: int, total: int) -> float:
    if total == 0:
        return 100.0
    return 100.0 * (1.0 - dist / total)


def _char_masks(s: str) -> dict[str, int]:
    masks: dict[str, int] = {}
    for k, ch in enumerate(s):
        masks[ch] = masks.get(ch, 0) | (1 << k)
    return masks


def lcs_length(a: str, b: str) -> int:
    """Longest common subsequence length (bit-parallel over ``a``)."""
    if not a or not b:
        return 0
    masks = _char_masks(a)
    full = (1 << len(a)) - 1
    v = full
    for ch in b:
        u = v & masks.get(ch, 0)
        v = ((v + u) | (v - u)) & full
    return len(a) - v.bit_count()


def indel_distance(a: str, b: str) -> int:
    return len(a) + len(b) - 2 * lcs_length(a, b)


def indel_ratio(a: str, b: str) -> float:
    a, b = normalize_name(a), normalize_name(b)
    return _score(indel_distance(a, b), len(a) + len(b))


def _best_window(s: str, l: str) -> float:
    """Max indel score of ``s`` against every substring of ``l`` (both canonical).

    A substring is compared in canonical form, so one with a space at either
    edge scores as its trimmed self; only space-free edges are scanned.
    """
    ls = len(s)
    if ls == 0 or s in l:
        return 100.0
    masks = _char_masks(s)
    full = (1 << ls) - 1
    best = 0.0
    n = len(l)
    for i in range(n):
        if l[i] == " ":
            continue
        # a start character absent from s is dominated by starting one later
        if l[i] not in masks and i + 1 < n and l[i + 1] != " ":
            continue
        v = full
        for j in range(i, n):
            wlen = j - i + 1
            if wlen > ls and _score(wlen - ls, ls + wlen) < best:
                break
            m = masks.get(l[j])
            if m is not None:
                u = v & m
                v = ((v + u) | (v - u)) & full
            if l[j] == " ":
                continue
            lcs = ls - v.bit_count()
            score = _score(ls + wlen - 2 * lcs, ls + wlen)
            if score > best:
                best = score
    return best


def partial_ratio(a: str, b: str) -> float:
    a, b = normalize_name(a), normalize_name(b)
    if len(a) < len(b):
        return _best_window(a, b)
    if len(b) < len(a):
        return _best_window(b, a)
    # equal lengths: neither is "the shorter"; take both directions
    return max(_best_window(a, b), _best_window(b, a))

"""Near-duplicate crop grouping via 64-bit difference hashes.

Crops whose hashes sit within a Hamming-distance threshold are linked into
one group (single linkage, so drifting near-duplicates chain together) and
only the group representative goes out for human review.
"""

from __future__ import annotations

import numpy as np

from .models import DedupGroup
from .raster import area_resize, to_grayscale


def dhash(image: np.ndarray) -> int:
    """Row-wise difference hash: grayscale, area-average to 9x8, then
    bit j = 1 iff pixel j is darker than its right neighbour.

    Cells are quantized to 1e-6 before comparison so that exactly-uniform
    inputs hash to zero instead of picking up resize rounding dust."""
    gray = to_grayscale(image).astype(np.float64)
    small = np.round(area_resize(gray, 9, 8), 6)  # 9 columns, 8 rows
    bits = small[:, :-1] < small[:, 1:]
    value = 0
    for j, bit in enumerate(bits.flatten()):
        if bit:
            value |= 1 << j
    return value


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def group_duplicates(
    hashes: dict[str, int], threshold_bits: int
) -> list[DedupGroup]:
    """Single-linkage clusters over Hamming distance <= threshold_bits.

    Representative is the lexicographically smallest member. Pairwise
    comparison is quadratic, which is fine at per-run crop counts.
    """
    if not (0 <= threshold_bits <= 64):
        raise ValueError(f"threshold_bits {threshold_bits} outside [0, 64]")
    ids = sorted(hashes)
    parent = {i: i for i in ids}

    def find(i: str) -> str:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a_pos, a in enumerate(ids):
        for b in ids[a_pos + 1:]:
            if hamming(hashes[a], hashes[b]) <= threshold_bits:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    members_of: dict[str, list[str]] = {}
    for i in ids:
        members_of.setdefault(find(i), []).append(i)

    groups = []
    for rep in sorted(members_of):
        members = sorted(members_of[rep])
        groups.append(DedupGroup(
            group_id=f"g_{rep}",
            representative=rep,
            members=members,
            hash_bits=hashes[rep],
        ))
    return groups

"""Ordering of opaque identifiers (truck ids, segment ids)."""

from __future__ import annotations


def natural_key(value) -> tuple:
    """Numeric ids sort numerically and before any non-numeric id, which sort as text.

    Every module that needs "ascending truck_id" (OPTICS seeding, DFS child order,
    output canonicalization) goes through this key so they all agree.
    """
    s = str(value)
    try:
        return (0, int(s), s)
    except ValueError:
        return (1, 0, s)


def sort_ids(values) -> list:
    return sorted(values, key=natural_key)

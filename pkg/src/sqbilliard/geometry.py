"""Folding between the unfolded plane and the box, and mirror images.

The square ``[0, L]^2`` tiles the plane by reflections.  A straight line in
the unfolded plane folds back onto a billiard trajectory, and every point of
the box has a lattice of mirror images, half of them reached through an odd
number of reflections.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError

__all__ = [
    "BilliardConfig",
    "FoldedPoint",
    "fold_coordinate",
    "fold_array",
    "image_points",
    "image_offsets_1d",
]


@dataclass(frozen=True)
class BilliardConfig:
    """Physical arena: box side ``L``, particle mass ``m`` and ``hbar``."""

    L: float = 10.0
    m: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("L", "m", "hbar"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"BilliardConfig.{name} must be finite and > 0, got {value!r}")

    def contains(self, x, y, *, strict=False):
        if strict:
            return 0.0 < x < self.L and 0.0 < y < self.L
        return 0.0 <= x <= self.L and 0.0 <= y <= self.L


class FoldedPoint(NamedTuple):
    u: float
    odd: bool

    @property
    def parity(self):
        return "odd" if self.odd else "even"


def fold_coordinate(u_unfolded: float, L: float) -> FoldedPoint:
    """Fold one unfolded coordinate back into ``[0, L]``.

    The parity is odd when the unfolded coordinate lies in a cell reached by
    an odd number of reflections, i.e. when ``floor(u / L)`` is odd.  Exact
    multiples of ``L`` land on the wall and take the parity of the cell that
    starts there.
    """
    if not math.isfinite(u_unfolded):
        raise DomainError(f"cannot fold non-finite coordinate {u_unfolded!r}")
    if not L > 0:
        raise DomainError(f"box side must be > 0, got {L!r}")
    two_l = 2.0 * L
    r = ((u_unfolded % two_l) + two_l) % two_l
    u = L - abs(r - L)
    odd = (math.floor(u_unfolded / L) % 2) == 1
    return FoldedPoint(u, odd)


def fold_array(u, L):
    """Vectorized :func:`fold_coordinate`; returns ``(u_folded, odd_mask)``."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise DomainError("cannot fold non-finite coordinates")
    two_l = 2.0 * L
    r = np.mod(np.mod(u, two_l) + two_l, two_l)
    folded = L - np.abs(r - L)
    odd = np.mod(np.floor(u / L), 2.0) == 1.0
    return folded, odd


def image_offsets_1d(u, L, k_max):
    """Mirror images of a coordinate along one axis.

    Returns ``(positions, signs)`` ordered by ``j = -k_max .. k_max`` and,
    within each ``j``, the even image ``2jL + u`` (sign ``+1``) before the odd
    image ``2jL - u`` (sign ``-1``).
    """
    j = np.arange(-k_max, k_max + 1, dtype=float)
    pos = np.empty(2 * j.size)
    sgn = np.empty(2 * j.size)
    pos[0::2] = 2.0 * j * L + u
    pos[1::2] = 2.0 * j * L - u
    sgn[0::2] = 1.0
    sgn[1::2] = -1.0
    return pos, sgn


def image_points(x, L, k_max):
    """All mirror images of a point of the box with their Dirichlet signs.

    Each coordinate of an image is ``2jL + x`` (even type) or ``2jL - x``
    (odd type) with ``|j| <= k_max``; the sign is the product of ``-1`` over
    odd-type axes.  The list holds ``(2 (2 k_max + 1))**2`` entries; the
    y-axis image is the outer loop and the x-axis image the inner loop, each
    in the order of :func:`image_offsets_1d`.  For ``k_max = 0`` this gives
    ``(x, y), (-x, y), (x, -y), (-x, -y)``.
    """
    x0, y0 = float(x[0]), float(x[1])
    if not (0.0 <= x0 <= L and 0.0 <= y0 <= L):
        raise DomainError(f"point {x!r} lies outside the box [0, {L}]^2")
    if k_max < 0:
        raise DomainError("k_max must be >= 0")
    px, sx = image_offsets_1d(x0, L, int(k_max))
    py, sy = image_offsets_1d(y0, L, int(k_max))
    out = []
    for yy, s_y in zip(py, sy):
        for xx, s_x in zip(px, sx):
            out.append(((float(xx), float(yy)), int(s_x * s_y)))
    return out

"""Box geometry and site indexing for Z^d intersected with [-N, N]^d.

Sites are addressed either as coordinate tuples or as flat row-major
indices (axis e_1 slowest).  Neighbors are enumerated in the fixed order
+e_1, -e_1, ..., +e_d, -e_d; steps leaving the box are reported as the
KILLED sentinel, which realizes the absorbing boundary of the killed walk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .rng import MASK64, mix64

_INDEX_LIMIT = 1 << 62


class _Killed:
    """Sentinel for a neighbor outside the box."""

    __slots__ = ()

    def __repr__(self):
        return "KILLED"


KILLED = _Killed()


def l1_norm(site) -> int:
    return int(sum(abs(int(c)) for c in site))


def linf_norm(site) -> int:
    return int(max(abs(int(c)) for c in site))


@dataclass(frozen=True)
class BoxGeometry:
    """Geometry of Z^d cut to [-N, N]^d with a bijective flat index."""

    dimension: int
    radius: int
    site_count: int
    _strides: tuple = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    def contains(self, site) -> bool:
        return len(site) == self.dimension and all(
            -self.radius <= int(c) <= self.radius for c in site
        )

    def index_of(self, site) -> int:
        if not self.contains(site):
            raise ValidationError(f"site {tuple(site)} outside box [-{self.radius},{self.radius}]^{self.dimension}")
        return sum((int(c) + self.radius) * s for c, s in zip(site, self._strides))

    def site_of(self, index: int):
        if not 0 <= index < self.site_count:
            raise ValidationError(f"flat index {index} out of range [0, {self.site_count})")
        coords = []
        for s in self._strides:
            coords.append(index // s - self.radius)
            index %= s
        return tuple(coords)

    @property
    def origin_index(self) -> int:
        return self.index_of((0,) * self.dimension)

    def neighbor_table(self) -> np.ndarray:
        """(site_count, 2d) int64 array of neighbor flat indices, -1 if killed."""
        tab = self._cache.get("neighbors")
        if tab is None:
            tab = _build_neighbor_table(self)
            self._cache["neighbors"] = tab
        return tab

    def site_hashes(self) -> np.ndarray:
        """Coordinate-keyed 64-bit hashes, one per site, shared across boxes."""
        h = self._cache.get("hashes")
        if h is None:
            h = _build_site_hashes(self)
            self._cache["hashes"] = h
        return h

    def coordinates(self) -> np.ndarray:
        """(site_count, d) int64 coordinates in flat-index order."""
        c = self._cache.get("coords")
        if c is None:
            side = self.side
            grids = np.indices((side,) * self.dimension).reshape(self.dimension, -1)
            c = (grids.T - self.radius).astype(np.int64)
            self._cache["coords"] = c
        return c


def build_box(d: int, N: int) -> BoxGeometry:
    """Construct the box geometry for Z^d cut to [-N, N]^d."""
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    if N < 1:
        raise ValidationError(f"radius must be >= 1, got {N}")
    side = 2 * N + 1
    count = side**d
    if count >= _INDEX_LIMIT:
        raise ValidationError(
            f"site count {side}^{d} exceeds the platform index range ({_INDEX_LIMIT})"
        )
    strides = tuple(side ** (d - 1 - i) for i in range(d))
    return BoxGeometry(dimension=d, radius=N, site_count=count, _strides=strides)


def neighbors(box: BoxGeometry, site):
    """The 2d unit-step neighbors of ``site`` in fixed axis order.

    Out-of-box entries are the KILLED sentinel.
    """
    if not box.contains(site):
        raise ValidationError(f"site {tuple(site)} outside box")
    out = []
    site = tuple(int(c) for c in site)
    for axis in range(box.dimension):
        for step in (1, -1):
            nb = list(site)
            nb[axis] += step
            if -box.radius <= nb[axis] <= box.radius:
                out.append(tuple(nb))
            else:
                out.append(KILLED)
    return out


def _build_neighbor_table(box: BoxGeometry) -> np.ndarray:
    d, N, n = box.dimension, box.radius, box.site_count
    side = box.side
    idx = np.arange(n, dtype=np.int64)
    tab = np.empty((n, 2 * d), dtype=np.int64)
    for axis in range(d):
        stride = box._strides[axis]
        coord = (idx // stride) % side
        up = idx + stride
        up[coord == side - 1] = -1
        down = idx - stride
        down[coord == 0] = -1
        tab[:, 2 * axis] = up
        tab[:, 2 * axis + 1] = down
    return tab


def _build_site_hashes(box: BoxGeometry) -> np.ndarray:
    coords = box.coordinates()
    h = np.full(box.site_count, 0xA0761D6478BD642F, dtype=np.uint64)
    for axis in range(box.dimension):
        axis_salt = np.uint64(mix64((axis + 1) * 0x8BB84B93962EACC9 & MASK64))
        c = coords[:, axis].astype(np.int64).view(np.uint64)
        z = h ^ (c * np.uint64(0x9E3779B97F4A7C15) + axis_salt)
        z ^= z >> np.uint64(30)
        z *= np.uint64(0xBF58476D1CE4E5B9)
        z ^= z >> np.uint64(27)
        z *= np.uint64(0x94D049BB133111EB)
        z ^= z >> np.uint64(31)
        h = z
    return h

"""Uniform cell-centred grids for bounded domains in one and two dimensions.

A :class:`DomainGrid` stores the cells of a Cartesian lattice whose centres lie
inside the domain. Fields on the grid are plain ``numpy`` arrays indexed by
node number and are implicitly extended by zero outside the domain.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

SHAPES = ("interval", "square", "ball", "l_shape", "custom_mask")


@dataclass(frozen=True)
class FracParams:
    """Dimension ``dim``, fractional order ``s`` and integrability exponent ``p``.

    With ``strict=True`` the standing assumption ``p < dim/s`` is enforced as
    well. The discrete problems stay well posed without it, so callers that
    sweep beyond that range pass ``strict=False``.
    """

    dim: int
    s: float
    p: float
    strict: bool = True

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not self.p > 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.strict and not self.p < self.dim / self.s:
            raise ValueError(
                f"p={self.p} violates p < N/s = {self.dim / self.s:.6g}; "
                "pass strict=False to allow it"
            )

    @property
    def energy_exponent(self) -> float:
        return self.dim + self.s * self.p

    @property
    def perimeter_exponent(self) -> float:
        return self.dim + self.s

    @property
    def in_standard_range(self) -> bool:
        return self.p < self.dim / self.s

    def with_p(self, p: float) -> "FracParams":
        return replace(self, p=float(p))


@dataclass(frozen=True, eq=False)
class DomainGrid:
    shape: str
    n_per_axis: int
    h: float
    origin: np.ndarray
    interior_mask: np.ndarray
    lattice: np.ndarray
    nodes: np.ndarray
    orbit_index: np.ndarray
    orbits: tuple = field(repr=False)

    @property
    def dim(self) -> int:
        return self.interior_mask.ndim

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def volume(self) -> float:
        return self.size * self.cell_volume

    @property
    def n_orbits(self) -> int:
        return len(self.orbits)

    @property
    def diameter(self) -> float:
        """Upper bound for the diameter of the union of interior cells."""
        if self.size == 1:
            span = 0.0
        else:
            span = float(pdist(self.nodes).max())
        return span + np.sqrt(self.dim) * self.h

    def lattice_mask(self, member: np.ndarray) -> np.ndarray:
        """Scatter a node-indexed boolean array back onto the lattice."""
        out = np.zeros(self.interior_mask.shape, dtype=bool)
        out[tuple(self.lattice.T)] = np.asarray(member, dtype=bool)
        return out

    def to_lattice(self, u: np.ndarray, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.interior_mask.shape, fill, dtype=float)
        out[tuple(self.lattice.T)] = u
        return out


@dataclass(frozen=True, eq=False)
class SubsetCandidate:
    """A union of interior cells, stored as a node-indexed boolean array."""

    member_mask: np.ndarray
    measure: float
    s_perimeter: float | None = None

    @property
    def quotient(self) -> float:
        if self.s_perimeter is None:
            raise ValueError("s_perimeter has not been evaluated")
        if self.measure <= 0:
            raise ValueError("quotient undefined for an empty set")
        return self.s_perimeter / self.measure

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.member_mask))


def subset(grid: DomainGrid, member_mask, s_perimeter: float | None = None) -> SubsetCandidate:
    member = np.asarray(member_mask, dtype=bool)
    if member.shape == grid.interior_mask.shape and member.shape != (grid.size,):
        if np.any(member & ~grid.interior_mask):
            raise ValueError("subset must lie inside the interior mask")
        member = member[tuple(grid.lattice.T)]
    if member.shape != (grid.size,):
        raise ValueError("member mask does not match the grid")
    return SubsetCandidate(member, np.count_nonzero(member) * grid.cell_volume, s_perimeter)


def _symmetry_maps(shape: tuple[int, ...]):
    """Lattice isometries of the bounding box: axis reflections and, for
    square boxes, axis permutations."""
    dim = len(shape)
    perms = [pr for pr in itertools.permutations(range(dim))
             if all(shape[a] == shape[b] for a, b in zip(pr, range(dim)))]
    for perm in perms:
        for flips in itertools.product((False, True), repeat=dim):
            yield perm, flips


def _apply_map(lattice: np.ndarray, shape, perm, flips) -> np.ndarray:
    out = lattice[:, list(perm)].copy()
    for axis, flip in enumerate(flips):
        if flip:
            out[:, axis] = shape[axis] - 1 - out[:, axis]
    return out


def _orbits(mask: np.ndarray, lattice: np.ndarray):
    shape = mask.shape
    ids = np.full(shape, -1, dtype=np.int64)
    ids[tuple(lattice.T)] = np.arange(len(lattice))
    rep = np.arange(len(lattice))
    for perm, flips in _symmetry_maps(shape):
        image = _apply_map(lattice, shape, perm, flips)
        if not np.all(mask[tuple(image.T)]):
            continue
        rep = np.minimum(rep, ids[tuple(image.T)])
    # Orbit numbers follow the first appearance of each representative.
    _, first, inverse = np.unique(rep, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    orbit_index = relabel[inverse]
    orbits = tuple(np.flatnonzero(orbit_index == k) for k in range(len(order)))
    return orbit_index, orbits


def _from_mask(shape: str, mask: np.ndarray, h: float, origin) -> DomainGrid:
    mask = np.array(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty interior mask")
    lattice = np.argwhere(mask)
    origin = np.asarray(origin, dtype=float).reshape(mask.ndim)
    nodes = origin + (lattice + 0.5) * h
    orbit_index, orbits = _orbits(mask, lattice)
    mask.setflags(write=False)
    return DomainGrid(shape, int(max(mask.shape)), float(h), origin, mask,
                      lattice, nodes, orbit_index, orbits)


def build_grid(shape: str, n_per_axis: int, params: FracParams | int, *,
               extent: float | None = None, mask=None, h: float | None = None) -> DomainGrid:
    """Cell-centred discretisation of a reference domain.

    ``interval`` is (0, extent), ``square`` is (0, extent)^2, ``l_shape`` is the
    square with its upper right quadrant removed and ``ball`` is the centred
    ball of diameter ``extent`` (radius 1 by default). ``custom_mask`` takes a
    boolean lattice ``mask`` and cell width ``h``.
    """
    dim = params if isinstance(params, int) else params.dim
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}")
    if shape == "custom_mask":
        if mask is None or h is None:
            raise ValueError("custom_mask needs both mask and h")
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != dim:
            raise ValueError("mask dimension does not match params.dim")
        return _from_mask(shape, mask, h, np.zeros(dim))
    n = int(n_per_axis)
    if n < 2:
        raise ValueError("n_per_axis must be at least 2")
    if shape == "interval" and dim != 1:
        raise ValueError("interval requires dim = 1")
    if shape in ("square", "l_shape") and dim != 2:
        raise ValueError(f"{shape} requires dim = 2")

    if extent is None:
        extent = 2.0 if shape == "ball" else 1.0
    h = extent / n
    centres = (np.arange(n) + 0.5) * h
    if shape == "ball":
        origin = np.full(dim, -extent / 2)
        centres = centres - extent / 2
    else:
        origin = np.zeros(dim)
    grids = np.meshgrid(*([centres] * dim), indexing="ij")

    if shape in ("interval", "square"):
        mask = np.ones((n,) * dim, dtype=bool)
    elif shape == "ball":
        r2 = sum(g ** 2 for g in grids)
        mask = r2 < (extent / 2) ** 2
    else:
        half = extent / 2
        mask = ~((grids[0] > half) & (grids[1] > half))
    return _from_mask(shape, mask, h, origin)


def measure(grid: DomainGrid, member=None) -> float:
    """Lebesgue measure of the grid domain, or of a node subset of it."""
    if member is None:
        return grid.volume
    return np.count_nonzero(np.asarray(member, dtype=bool)) * grid.cell_volume


def orbit_spread(grid: DomainGrid, u) -> float:
    """Largest oscillation of ``u`` inside a single symmetry orbit."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ValueError("field does not match the grid")
    order = np.argsort(grid.orbit_index, kind="stable")
    starts = np.flatnonzero(np.r_[True, np.diff(grid.orbit_index[order]) != 0])
    vals = u[order]
    spread = np.maximum.reduceat(vals, starts) - np.minimum.reduceat(vals, starts)
    return float(spread.max())


def orbit_average(grid: DomainGrid, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    sums = np.bincount(grid.orbit_index, weights=u, minlength=grid.n_orbits)
    counts = np.bincount(grid.orbit_index, minlength=grid.n_orbits)
    return sums / counts


def read_mask(path) -> tuple[int, float, np.ndarray]:
    """Parse a plain-text 0/1 mask with a one-line ``N h`` header."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 2:
        raise ValueError("mask file must start with a header line 'N h'")
    dim, h = int(lines[0][0]), float(lines[0][1])
    rows = [[int(tok) for tok in row] for row in lines[1:]]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError("mask rows must be non-empty and of equal length")
    mask = np.array(rows, dtype=int)
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask entries must be 0 or 1")
    if dim == 1:
        if mask.shape[0] != 1:
            raise ValueError("a 1-D mask has a single row")
        mask = mask[0]
    elif dim != 2:
        raise ValueError("only N = 1 or 2 is supported")
    return dim, h, mask.astype(bool)


def write_mask(path, mask, h: float) -> None:
    mask = np.atleast_1d(np.asarray(mask, dtype=int))
    rows = [mask] if mask.ndim == 1 else list(mask)
    body = "\n".join(" ".join(str(v) for v in row) for row in rows)
    Path(path).write_text(f"{mask.ndim} {h!r}\n{body}\n")


def grid_from_mask_file(path) -> DomainGrid:
    dim, h, mask = read_mask(path)
    return build_grid("custom_mask", max(mask.shape), dim, mask=mask, h=h)

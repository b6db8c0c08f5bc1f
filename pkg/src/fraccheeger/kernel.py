"""Singular-kernel weights and the discrete Gagliardo energy.

For a grid with cell width ``h`` and nodes ``x_i`` the discrete energy of a
node field ``u`` (zero outside the domain) is::

    S_p(u) = sum_{i != j} w_ij |u_i - u_j|^p + 2 h^N sum_i kappa_i |u_i|^p

with pair weights ``w_ij ~ h^{2N} |x_i - x_j|^{-a}`` and exterior tails
``kappa_i = int_{R^N \\ Omega} |x_i - y|^{-a} dy``. The exponent ``a`` is
``N + s p`` for energies and ``N + s`` for perimeters.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .grid import DomainGrid, FracParams

FAMILIES = ("energy", "perimeter")
CACHE_VERSION = 1

# Offsets (in cells, sup norm) that get subdivided Gauss-Legendre rules in
# the tail quadrature; farther cells use a single tensor rule.
_NEAR_OFFSET = 2


def _psi(t: np.ndarray, p: float) -> np.ndarray:
    """|t|^{p-2} t, continuous with value 0 at t = 0 for p > 1."""
    if p == 2.0:
        return t
    return np.sign(t) * np.abs(t) ** (p - 1.0)


def cube_exterior_integral(dim: int, exponent: float, half_width: float) -> float:
    """Integral of |y|^-exponent over the complement of [-a, a]^dim."""
    if exponent <= dim:
        raise ValueError("exponent must exceed the dimension")
    if dim == 1:
        c = 2.0 / (exponent - 1.0)
    else:
        ang, _ = quad(lambda t: np.cos(t) ** (exponent - 2.0), 0.0, np.pi / 4,
                      epsabs=0.0, epsrel=1e-13, limit=200)
        c = 8.0 / (exponent - 2.0) * ang
    return c * half_width ** (dim - exponent)


def _gauss_cell(offsets: np.ndarray, exponent: float, split: int, order: int) -> np.ndarray:
    """Tensor Gauss-Legendre integral of |y|^-a over unit squares centred at
    ``offsets``, each split into ``split x split`` subcells."""
    g, wg = leggauss(order)
    sub = (np.arange(split) + 0.5) / split - 0.5
    pts = (sub[:, None] + g[None, :] / (2 * split)).ravel()
    wts = np.tile(wg / (2 * split), split)
    total = np.zeros(len(offsets))
    for k in range(0, len(offsets), 512):
        off = offsets[k:k + 512].astype(float)
        px = off[:, 0, None, None] + pts[None, :, None]
        py = off[:, 1, None, None] + pts[None, None, :]
        vals = (px * px + py * py) ** (-exponent / 2)
        total[k:k + 512] = np.einsum("kij,i,j->k", vals, wts, wts)
    return total


def cell_integrals(offsets, exponent: float, dim: int) -> np.ndarray:
    """Integral of |y|^-exponent over unit cells centred at nonzero integer
    ``offsets`` (shape (m, dim)); scale by h^(dim - exponent) for width h."""
    offsets = np.asarray(offsets, dtype=np.int64).reshape(-1, dim)
    if np.any(np.all(offsets == 0, axis=1)):
        raise ValueError("the cell containing the origin has no finite integral")
    if dim == 1:
        k = np.abs(offsets[:, 0]).astype(float)
        return ((k - 0.5) ** (1 - exponent) - (k + 0.5) ** (1 - exponent)) / (exponent - 1)
    out = np.empty(len(offsets))
    near = np.abs(offsets).max(axis=1) <= _NEAR_OFFSET
    if near.any():
        out[near] = _gauss_cell(offsets[near], exponent, split=8, order=8)
    if (~near).any():
        out[~near] = _gauss_cell(offsets[~near], exponent, split=1, order=8)
    return out


def touching_pair_integral(offset, exponent: float, depth: int = 2, split: int = 4) -> float:
    """Subdivided midpoint value of the double integral of |x - y|^-a over two
    distinct touching unit cells at lattice ``offset``.

    Subcell pairs that still touch are split again, ``depth`` times in total;
    the remaining pairs use the midpoint rule.
    """
    offset = np.asarray(offset, dtype=float).reshape(1, -1)
    dim = offset.shape[1]
    sub = (np.arange(split) + 0.5) / split - 0.5
    shifts = np.array(list(np.ndindex(*(split,) * dim)), dtype=float)
    shifts = sub[shifts.astype(int)]
    rel = (shifts[None, :, :] - shifts[:, None, :]).reshape(-1, dim)

    def level(deltas: np.ndarray, size: float, depth_left: int) -> float:
        touching = np.abs(deltas).max(axis=1) <= size * (1 + 1e-12)
        dist = np.sqrt((deltas ** 2).sum(axis=1))
        far = size ** (2 * dim) * dist[~touching] ** (-exponent)
        total = far.sum()
        if depth_left == 0:
            total += (size ** (2 * dim) * dist[touching] ** (-exponent)).sum()
            return total
        child = (deltas[touching][:, None, :] + size * rel[None, :, :]).reshape(-1, dim)
        return total + level(child, size / split, depth_left - 1)

    return float(level(offset, 1.0, depth))


@lru_cache(maxsize=64)
def _touching_table(exponent: float, dim: int, depth: int):
    """Refined unit-width weights keyed by sorted absolute offset."""
    keys = [(1,)] if dim == 1 else [(0, 1), (1, 1)]
    return {k: touching_pair_integral(k, exponent, depth) for k in keys}


class PairOperator:
    """Dense form sum_{a != b} W_ab |v_a - v_b|^p + sum_a t_a |v_a|^p.

    ``mass`` holds the measure carried by each unknown, so a node field has
    ``mass = h^N`` everywhere and an orbit-reduced field carries ``h^N`` times
    the orbit size.
    """

    def __init__(self, W: np.ndarray, tail: np.ndarray, mass: np.ndarray):
        self.W = W
        self.tail = tail
        self.mass = mass

    @property
    def size(self) -> int:
        return len(self.mass)

    def form(self, v: np.ndarray, p: float) -> float:
        d = np.abs(v[:, None] - v[None, :])
        return float((self.W * d ** p).sum() + (self.tail * np.abs(v) ** p).sum())

    def action(self, v: np.ndarray, p: float) -> np.ndarray:
        """Gradient of form/p."""
        d = v[:, None] - v[None, :]
        return 2.0 * (self.W * _psi(d, p)).sum(axis=1) + self.tail * _psi(v, p)

    def pairing(self, u: np.ndarray, v: np.ndarray, p: float) -> float:
        du = u[:, None] - u[None, :]
        dv = v[:, None] - v[None, :]
        return float((self.W * _psi(du, p) * dv).sum() + (self.tail * _psi(u, p) * v).sum())

    def hessian(self, v: np.ndarray, p: float, floor: float = 0.0) -> np.ndarray:
        """Hessian of form/p; pair differences below ``floor`` are raised to
        it, which only matters for p < 2."""
        if p == 2.0:
            c = 2.0 * self.W
            diag_tail = self.tail
        else:
            d = np.maximum(np.abs(v[:, None] - v[None, :]), floor)
            c = 2.0 * (p - 1.0) * self.W * d ** (p - 2.0)
            np.fill_diagonal(c, 0.0)
            diag_tail = (p - 1.0) * self.tail * np.maximum(np.abs(v), floor) ** (p - 2.0)
        H = -c
        H[np.diag_indices_from(H)] = c.sum(axis=1) + diag_tail
        return H

    def linear_matrix(self) -> np.ndarray:
        """Matrix A with form(v, 2) = v^T A v."""
        return self.hessian(np.zeros(self.size), 2.0)


@dataclass(frozen=True, eq=False)
class KernelWeights:
    grid: DomainGrid
    family: str
    exponent: float
    pair_weights: np.ndarray
    tail: np.ndarray
    truncation_radius: float
    refined: bool
    params: FracParams | None = None

    @property
    def size(self) -> int:
        return self.grid.size

    @cached_property
    def operator(self) -> PairOperator:
        h_n = self.grid.cell_volume
        return PairOperator(self.pair_weights, 2.0 * h_n * self.tail, np.full(self.size, h_n))

    @cached_property
    def reduced_operator(self) -> PairOperator:
        """The same form restricted to fields that are constant on symmetry orbits."""
        grid = self.grid
        k = grid.n_orbits
        idx = grid.orbit_index
        order = np.argsort(idx, kind="stable")
        starts = np.flatnonzero(np.r_[True, np.diff(idx[order]) != 0])
        rows = np.add.reduceat(self.pair_weights[order], starts, axis=0)
        Wr = np.add.reduceat(rows[:, order], starts, axis=1)
        np.fill_diagonal(Wr, 0.0)
        h_n = grid.cell_volume
        tail = 2.0 * h_n * np.bincount(idx, weights=self.tail, minlength=k)
        mass = h_n * np.bincount(idx, minlength=k).astype(float)
        return PairOperator(Wr, tail, mass)


def assemble_kernel(grid: DomainGrid, exponent: float, family: str = "energy",
                    truncation_radius: float | None = None, *, refine: bool = True,
                    params: FracParams | None = None, depth: int = 2) -> KernelWeights:
    """Pair weights and exterior tails for the kernel |x - y|^-exponent."""
    dim = grid.dim
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}")
    if exponent <= dim:
        raise ValueError(f"exponent {exponent} <= N = {dim}: the exterior tail diverges")
    diam = grid.diameter
    if truncation_radius is None:
        truncation_radius = 4.0 * diam
    if truncation_radius <= diam:
        raise ValueError(f"truncation radius {truncation_radius} must exceed the diameter {diam}")
    h = grid.h
    lat = grid.lattice
    m = grid.size

    # Pair weights by lattice offset: midpoint rule, refined on touching cells.
    scale = h ** (2 * dim - exponent)
    refined = _touching_table(float(exponent), dim, depth) if refine else {}
    W = np.empty((m, m))
    for k in range(0, m, 512):
        off = np.abs(lat[k:k + 512, None, :] - lat[None, :, :])
        r2 = (off.astype(float) ** 2).sum(axis=2)
        r2[r2 == 0] = np.inf
        rows = scale * r2 ** (-exponent / 2)
        if refined:
            touch = off.max(axis=2) == 1
            key = np.sort(off[touch], axis=1)
            vals = np.empty(len(key))
            for kk, val in refined.items():
                vals[np.all(key == kk, axis=1)] = scale * val
            rows[touch] = vals
        W[k:k + 512] = rows

    # Tails: exterior cells of the truncation box (box cells minus interior
    # cells, both with exact cell integrals) plus the closed-form far field
    # outside the box. The full box sum is itself closed form.
    span = 2 * np.asarray(grid.interior_mask.shape) - 1
    centre = np.asarray(grid.interior_mask.shape) - 1
    table_off = np.array(list(np.ndindex(*span))) - centre
    nonzero = np.any(table_off != 0, axis=1)
    table = np.zeros(len(table_off))
    table[nonzero] = cell_integrals(table_off[nonzero], exponent, dim)
    table = table.reshape(tuple(span))
    interior = np.empty(m)
    for k in range(0, m, 256):
        rel = lat[None, :, :] - lat[k:k + 256, None, :] + centre
        interior[k:k + 256] = table[tuple(np.moveaxis(rel, 2, 0))].sum(axis=1)
    interior *= h ** (dim - exponent)
    rho = (np.ceil(truncation_radius / h) + 0.5) * h
    own = cube_exterior_integral(dim, exponent, h / 2)
    far = cube_exterior_integral(dim, exponent, rho)
    near = (own - far) - interior
    tail = near + far
    if np.any(tail <= 0):
        raise ValueError("non-positive exterior tail; the grid leaves no exterior")
    return KernelWeights(grid, family, float(exponent), W, tail, float(truncation_radius),
                         bool(refine), params)


def assemble_weights(grid: DomainGrid, params: FracParams, family: str = "energy",
                     truncation_radius: float | None = None, *, refine: bool = True) -> KernelWeights:
    if params.dim != grid.dim:
        raise ValueError("params.dim does not match the grid")
    if family == "energy":
        exponent = params.energy_exponent
    elif family == "perimeter":
        exponent = params.perimeter_exponent
    else:
        raise ValueError(f"family must be one of {FAMILIES}")
    return assemble_kernel(grid, exponent, family, truncation_radius, refine=refine, params=params)


def _field(weights: KernelWeights, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (weights.size,):
        raise ValueError(f"field of shape {u.shape} does not match a grid with {weights.size} nodes")
    return u


def _energy_family(weights: KernelWeights) -> None:
    if weights.family != "energy":
        raise ValueError("energy-family weights required")


def seminorm_p(weights: KernelWeights, u, p: float | None = None) -> float:
    """Discrete [u]_{s,p}^p including the interior-exterior interaction."""
    _energy_family(weights)
    p = weights.params.p if p is None else p
    return weights.operator.form(_field(weights, u), p)


def weak_action(weights: KernelWeights, u, v, p: float | None = None) -> float:
    """Discrete pairing of the fractional p-Laplacian of ``u`` with ``v``."""
    _energy_family(weights)
    p = weights.params.p if p is None else p
    return weights.operator.pairing(_field(weights, u), _field(weights, v), p)


def cache_key(grid: DomainGrid, weights_or_params, family: str, truncation_radius: float,
              refine: bool = True) -> dict:
    if isinstance(weights_or_params, FracParams):
        s, p = weights_or_params.s, weights_or_params.p
    else:
        s, p = weights_or_params.params.s, weights_or_params.params.p
    return {"shape": grid.shape, "n": grid.n_per_axis, "dim": grid.dim, "h": grid.h,
            "size": grid.size, "s": s, "p": p, "family": family,
            "R": float(truncation_radius), "refine": bool(refine)}


def save_weights(weights: KernelWeights, path) -> None:
    header = {"version": CACHE_VERSION,
              "key": cache_key(weights.grid, weights, weights.family,
                               weights.truncation_radius, weights.refined),
              "exponent": weights.exponent}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
                 pair_weights=weights.pair_weights, tail=weights.tail)


def load_weights(path, grid: DomainGrid, params: FracParams, family: str,
                 truncation_radius: float, refine: bool = True) -> KernelWeights | None:
    """Return cached weights, or None when the file is absent or stale."""
    path = Path(path)
    if not path.exists():
        return None
    with np.load(path) as data:
        header = json.loads(data["header"].tobytes().decode())
        if header.get("version") != CACHE_VERSION:
            return None
        if header.get("key") != cache_key(grid, params, family, truncation_radius, refine):
            return None
        W, tail = data["pair_weights"], data["tail"]
    return KernelWeights(grid, family, header["exponent"], W, tail, float(truncation_radius),
                         refine, params)


def cached_weights(cache_dir, grid: DomainGrid, params: FracParams, family: str = "energy",
                   truncation_radius: float | None = None, *, refine: bool = True) -> KernelWeights:
    if truncation_radius is None:
        truncation_radius = 4.0 * grid.diameter
    key = cache_key(grid, params, family, truncation_radius, refine)
    name = "w_{shape}_{n}_{s!r}_{p!r}_{family}_{R!r}.npz".format(**key)
    path = Path(cache_dir) / name
    hit = load_weights(path, grid, params, family, truncation_radius, refine)
    if hit is not None:
        return hit
    weights = assemble_weights(grid, params, family, truncation_radius, refine=refine)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_weights(weights, path)
    return weights

"""Finite simplicial complexes, barycentric coordinates and the dual-cell cover.

Every complex carries a single global linear order on its vertices (integer
order of the vertex ids).  Simplices are stored as strictly increasing
tuples, so the vertex set of any simplex is totally ordered by it.
"""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DisconnectedComplex,
    DuplicateVertexInSimplex,
    InvalidParameter,
    NotASurface,
    PointOutsideBlock,
)

Simplex = tuple  # strictly increasing tuple of vertex ids

BLOCK_TOL = 1e-12


@dataclass(frozen=True)
class Complex:
    """Face-closed finite simplicial complex with a connected 1-skeleton.

    ``family`` records how a generator built the complex (for example
    ``("torus_grid", 3)``) and ``orientation`` optionally maps each
    2-simplex to +1/-1, the sign of its orientation relative to the
    ascending vertex order.
    """

    vertices: tuple
    simplices: tuple
    family: Optional[tuple] = field(default=None, compare=False)
    orientation: Optional[Mapping[tuple, int]] = field(default=None, compare=False, repr=False)

    @cached_property
    def simplex_set(self) -> frozenset:
        return frozenset(self.simplices)

    @property
    def dim(self) -> int:
        return max(len(s) for s in self.simplices) - 1

    def simplices_of_dim(self, d: int) -> list:
        return [s for s in self.simplices if len(s) == d + 1]

    @cached_property
    def edges(self) -> list:
        return self.simplices_of_dim(1)

    @cached_property
    def triangles(self) -> list:
        return self.simplices_of_dim(2)

    @cached_property
    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    @cached_property
    def maximal_simplices(self) -> list:
        cofaces = set()
        for s in self.simplices:
            for r in range(1, len(s)):
                cofaces.update(itertools.combinations(s, r))
        return [s for s in self.simplices if s not in cofaces]

    @cached_property
    def neighbors(self) -> dict:
        nb = {v: [] for v in self.vertices}
        for i, j in self.edges:
            nb[i].append(j)
            nb[j].append(i)
        return {v: sorted(ns) for v, ns in nb.items()}

    def is_simplex(self, vs: Iterable) -> bool:
        return tuple(sorted(set(vs))) in self.simplex_set

    def cofaces(self, face: Sequence) -> list:
        """All simplices containing ``face`` (including itself)."""
        fs = set(face)
        return [s for s in self.simplices if fs.issubset(s)]

    @cached_property
    def counts(self) -> tuple:
        return tuple(len(self.simplices_of_dim(d)) for d in range(self.dim + 1))

    @property
    def euler_characteristic(self) -> int:
        return sum((-1) ** d * n for d, n in enumerate(self.counts))

    def index(self, v) -> int:
        return self._vertex_index[v]

    @cached_property
    def _vertex_index(self) -> dict:
        return {v: n for n, v in enumerate(self.vertices)}

    def to_json(self) -> dict:
        return {
            "vertices": list(self.vertices),
            "maximal_simplices": [list(s) for s in self.maximal_simplices],
        }


def _connected(vertices, edges) -> bool:
    nb = {v: set() for v in vertices}
    for i, j in edges:
        nb[i].add(j)
        nb[j].add(i)
    start = next(iter(nb))
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in nb[v] - seen:
            seen.add(w)
            queue.append(w)
    return len(seen) == len(nb)


def build_complex(maximal: Iterable[Sequence], vertices: Optional[Iterable] = None,
                  family=None, orientation=None) -> Complex:
    """Face closure of a list of simplices.

    >>> build_complex([(0, 1, 2)]).counts
    (3, 3, 1)
    """
    maximal = [tuple(s) for s in maximal]
    if not maximal:
        raise InvalidParameter("complex specification is empty")
    faces = set()
    for s in maximal:
        if len(s) == 0:
            raise InvalidParameter("empty simplex in specification")
        if len(set(s)) != len(s):
            raise DuplicateVertexInSimplex(f"simplex {s} repeats a vertex")
        s = tuple(sorted(s))
        for r in range(1, len(s) + 1):
            faces.update(itertools.combinations(s, r))
    vs = {f[0] for f in faces if len(f) == 1}
    if vertices is not None:
        vertices = list(vertices)
        if len(set(vertices)) != len(vertices):
            raise InvalidParameter("vertex ids must be distinct")
        vs |= set(vertices)
        faces |= {(v,) for v in vertices}
    vs = tuple(sorted(vs))
    edges = [f for f in faces if len(f) == 2]
    if not _connected(vs, edges):
        raise DisconnectedComplex("the 1-skeleton is not connected")
    simplices = tuple(sorted(faces, key=lambda s: (len(s), s)))
    return Complex(vs, simplices, family=family, orientation=orientation)


def _perm_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for a in range(len(seq)):
        for b in range(a + 1, len(seq)):
            if seq[a] > seq[b]:
                sign = -sign
    return sign


def torus_grid(n: int) -> Complex:
    """n x n grid triangulation of the 2-torus, vertex id ``x + n*y``.

    Each square ``[x, x+1] x [y, y+1]`` is cut along its main diagonal.  The
    stored orientation is the counterclockwise one of the plane.
    """
    if int(n) != n or n < 3:
        raise InvalidParameter(f"torus_grid needs n >= 3, got {n}")
    n = int(n)

    def vid(x, y):
        return (x % n) + n * (y % n)

    tris, orient = [], {}
    for y in range(n):
        for x in range(n):
            for ccw in ((vid(x, y), vid(x + 1, y), vid(x + 1, y + 1)),
                        (vid(x, y), vid(x + 1, y + 1), vid(x, y + 1))):
                key = tuple(sorted(ccw))
                tris.append(key)
                orient[key] = _perm_sign(ccw)
    return build_complex(tris, family=("torus_grid", n), orientation=orient)


def circle_cycle(n: int) -> Complex:
    """Boundary of an n-gon."""
    if int(n) != n or n < 3:
        raise InvalidParameter(f"circle_cycle needs n >= 3, got {n}")
    n = int(n)
    return build_complex([(i, (i + 1) % n) for i in range(n)], family=("circle_cycle", n))


def barycentric_subdivision(c: Complex) -> Complex:
    """First barycentric subdivision; new vertex ids follow (dim, lexicographic) order of the
    original simplices, so every chain of faces is increasing."""
    ids = {s: n for n, s in enumerate(c.simplices)}
    chains = []

    def extend(chain):
        top = chain[-1]
        ups = [s for s in c.simplices if len(s) == len(top) + 1 and set(top) < set(s)]
        if not ups:
            chains.append(tuple(ids[s] for s in chain))
        for s in ups:
            extend(chain + [s])

    for v in c.vertices:
        extend([(v,)])
    return build_complex(chains, family=("subdivision", c.family))


def load_complex(data) -> Complex:
    """Build a complex from the JSON description ``{"vertices": [...], "maximal_simplices": [...]}``."""
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    try:
        maximal = data["maximal_simplices"]
    except (KeyError, TypeError) as exc:
        raise InvalidParameter("complex description needs a 'maximal_simplices' list") from exc
    return build_complex(maximal, vertices=data.get("vertices"))


def surface_orientation(c: Complex) -> dict:
    """Coherent orientation signs (relative to ascending order) of a closed surface.

    Uses ``c.orientation`` when present; otherwise propagates an orientation
    from the first triangle, which is declared positive.
    """
    if c.dim != 2 or any(len(s) < 3 for s in c.maximal_simplices):
        raise NotASurface("complex is not a pure 2-dimensional complex")
    owners = {e: [] for e in c.edges}
    for t in c.triangles:
        for e in itertools.combinations(t, 2):
            owners[e].append(t)
    if any(len(ts) != 2 for ts in owners.values()):
        raise NotASurface("some edge does not lie in exactly two triangles")

    def induced(t, e):
        # ascending (a, b, c) induces a->b, b->c, c->a on its boundary
        return -1 if (e[0], e[1]) == (t[0], t[2]) else 1

    if c.orientation is not None:
        orient = dict(c.orientation)
    else:
        orient = {c.triangles[0]: 1}
        queue = deque([c.triangles[0]])
        while queue:
            t = queue.popleft()
            for e in itertools.combinations(t, 2):
                for u in owners[e]:
                    if u not in orient:
                        orient[u] = -orient[t] * induced(t, e) * induced(u, e)
                        queue.append(u)
        if len(orient) != len(c.triangles):
            raise NotASurface("triangles are not connected through edges")
    for e, (t, u) in owners.items():
        if orient[t] * induced(t, e) + orient[u] * induced(u, e) != 0:
            raise NotASurface("surface is not orientable or orientation is incoherent")
    return orient


@dataclass(frozen=True)
class BaryPoint:
    """Point of |complex| given by barycentric coordinates in a named simplex."""

    simplex: tuple
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        object.__setattr__(self, "simplex", tuple(self.simplex))
        object.__setattr__(self, "t", t)
        if t.shape != (len(self.simplex),):
            raise InvalidParameter("coordinate count does not match the simplex")
        if np.any(t < -BLOCK_TOL) or abs(t.sum() - 1.0) > BLOCK_TOL:
            raise InvalidParameter(f"invalid barycentric coordinates {t}")

    def coord(self, v) -> float:
        try:
            return float(self.t[self.simplex.index(v)])
        except ValueError:
            return 0.0

    @property
    def support(self) -> tuple:
        return tuple(v for v, x in zip(self.simplex, self.t) if x > BLOCK_TOL)


def barycenter(simplex: Sequence) -> BaryPoint:
    m = len(simplex)
    return BaryPoint(tuple(simplex), np.full(m, 1.0 / m))


def modified_coords(p: BaryPoint, i, tol: float = BLOCK_TOL) -> np.ndarray:
    """Modified barycentric coordinates ``s_j = t_j / t_i`` on the block c_i^sigma."""
    if i not in p.simplex:
        raise PointOutsideBlock(f"vertex {i} is not in simplex {p.simplex}")
    ti = p.coord(i)
    if ti < p.t.max() - tol:
        raise PointOutsideBlock(f"t_{i} = {ti} is not maximal in {p.t}")
    s = p.t / ti
    s[p.simplex.index(i)] = 1.0
    return np.clip(s, 0.0, 1.0)


def from_modified(simplex: Sequence, s: Sequence) -> BaryPoint:
    s = np.asarray(s, dtype=float)
    return BaryPoint(tuple(simplex), s / s.sum())


def block_point(simplex: Sequence, fixed: Iterable, free: Mapping) -> BaryPoint:
    """Point with ``s = 1`` on ``fixed`` vertices and ``s_l = free[l]`` elsewhere (0 if absent)."""
    fixed = set(fixed)
    s = [1.0 if v in fixed else float(free.get(v, 0.0)) for v in simplex]
    return from_modified(simplex, s)


class DualCover:
    """The closed cover of |complex| by dual cells c_i.

    A point lies in the block c_i^sigma iff its i-th barycentric coordinate
    is maximal in sigma.  Boundary points belong to several blocks.
    """

    def __init__(self, c: Complex, tol: float = BLOCK_TOL):
        self.complex = c
        self.tol = tol
        self.blocks = [(i, s) for s in c.simplices for i in s]
        self.nerve = self._nerve()

    def in_cell(self, p: BaryPoint, i) -> bool:
        return i in p.simplex and p.coord(i) >= p.t.max() - self.tol

    def cells_containing(self, p: BaryPoint) -> tuple:
        m = p.t.max()
        return tuple(v for v, x in zip(p.simplex, p.t) if x >= m - self.tol)

    def in_overlap(self, p: BaryPoint, vs: Iterable) -> bool:
        return all(self.in_cell(p, v) for v in vs)

    def barycenter(self, s: Sequence) -> BaryPoint:
        return barycenter(s)

    def _nerve(self) -> frozenset:
        # c_I is nonempty iff some block family {c_i^sigma : i in I} has a
        # common point; the barycenter of I (as a face of sigma) is tested.
        found = set()
        for s in self.complex.simplices:
            for r in range(1, len(s) + 1):
                for I in itertools.combinations(s, r):
                    if I in found:
                        continue
                    p = block_point(s, I, {})
                    if all(self.in_cell(p, v) for v in I):
                        found.add(I)
        return frozenset(found)

    def intersects(self, vs: Iterable) -> bool:
        return tuple(sorted(set(vs))) in self.nerve


def dual_cover(c: Complex) -> DualCover:
    return DualCover(c)


def random_block_point(simplex: Sequence, i, rng: np.random.Generator) -> BaryPoint:
    """Uniform sample in modified coordinates of the block c_i^simplex."""
    s = rng.uniform(0.0, 1.0, size=len(simplex))
    s[list(simplex).index(i)] = 1.0
    return from_modified(simplex, s)

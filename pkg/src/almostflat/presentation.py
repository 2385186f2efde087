"""Edge-path presentation of the fundamental group.

Generators are the directed edges ``(i, j)`` of the complex (both
orientations) together with the degenerate edges ``(i, i)``.  Relators are
the letters of the maximal tree and the triangle words
``<i,j><j,k><i,k>^-1`` for every ordered vertex triple of a simplex.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from math import gcd
from typing import Mapping, Optional, Sequence

import numpy as np

from .complex import Complex
from .errors import InvalidParameter, RootNotFound, SingularLetterValue, UnknownGenerator

Edge = tuple  # directed edge (i, j)


@dataclass(frozen=True)
class Word:
    """Element of the free group on directed edges.

    Letters are ``(i, j, +1)`` or ``(i, j, -1)``.  Free reduction only
    cancels a letter against its formal inverse; ``<i,j>^-1`` and ``<j,i>``
    are different letters.
    """

    letters: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(tuple(x) for x in self.letters))

    @classmethod
    def letter(cls, i, j, exp: int = 1) -> "Word":
        return cls(((i, j, exp),))

    def reduced(self) -> "Word":
        out = []
        for a in self.letters:
            if out and out[-1][:2] == a[:2] and out[-1][2] == -a[2]:
                out.pop()
            else:
                out.append(a)
        return Word(tuple(out))

    def inverse(self) -> "Word":
        return Word(tuple((i, j, -e) for i, j, e in reversed(self.letters)))

    def __mul__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters).reduced()

    def __len__(self):
        return len(self.letters)

    def __str__(self):
        if not self.letters:
            return "e"
        return "".join(f"<{i},{j}>" + ("" if e == 1 else "^-1") for i, j, e in self.letters)


@dataclass(frozen=True)
class Tree:
    root: object
    parent: Mapping
    tree_edges: frozenset  # unordered, stored ascending

    def path(self, v) -> list:
        """Vertices of the unique tree path from the root to ``v``."""
        out = [v]
        while self.parent[out[-1]] is not None:
            out.append(self.parent[out[-1]])
        return out[::-1]

    def depth(self) -> int:
        return max(len(self.path(v)) - 1 for v in self.parent)

    def contains(self, i, j) -> bool:
        return i == j or (min(i, j), max(i, j)) in self.tree_edges


def maximal_tree(c: Complex, root=None) -> Tree:
    """Breadth-first spanning tree, neighbours visited in vertex order."""
    if root is None:
        root = c.vertices[0]
    if root not in c._vertex_index:
        raise RootNotFound(f"root {root!r} is not a vertex")
    parent = {root: None}
    edges = set()
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w in c.neighbors[v]:
            if w not in parent:
                parent[w] = v
                edges.add((min(v, w), max(v, w)))
                queue.append(w)
    return Tree(root, parent, frozenset(edges))


def tree_from_edges(c: Complex, edges, root=None) -> Tree:
    """Tree with the given (unordered) edges, rooted at ``root`` (default: first vertex)."""
    if root is None:
        root = c.vertices[0]
    if root not in c._vertex_index:
        raise RootNotFound(f"root {root!r} is not a vertex")
    es = {(min(a, b), max(a, b)) for a, b in edges}
    if any(e not in c.edge_set for e in es) or len(es) != len(c.vertices) - 1:
        raise InvalidParameter("tree edges must be |V| - 1 edges of the complex")
    adj = {v: [] for v in c.vertices}
    for a, b in es:
        adj[a].append(b)
        adj[b].append(a)
    parent = {root: None}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w in sorted(adj[v]):
            if w not in parent:
                parent[w] = v
                queue.append(w)
    if len(parent) != len(c.vertices):
        raise InvalidParameter("edges do not form a spanning tree")
    return Tree(root, parent, frozenset(es))


def longest_path_length(c: Complex, root) -> int:
    """Number of edges of a longest simple path starting at ``root``.

    Exhaustive depth-first search, stopped early once a Hamiltonian path is
    found.
    """
    target = len(c.vertices) - 1
    best = 0
    nb = c.neighbors
    stack = [(root, 0, iter(nb[root]))]
    on_path = {root}
    while stack:
        v, d, it = stack[-1]
        best = max(best, d)
        if best == target:
            return best
        for w in it:
            if w not in on_path:
                on_path.add(w)
                stack.append((w, d + 1, iter(nb[w])))
                break
        else:
            stack.pop()
            on_path.discard(v)
    return best


def _int_rank(rows: list) -> int:
    """Exact rank of an integer matrix given as sparse dict rows."""
    rows = [dict(r) for r in rows if r]
    rank = 0
    while rows:
        piv_row = rows.pop()
        if not piv_row:
            continue
        col = min(piv_row)
        a = piv_row[col]
        rank += 1
        nxt = []
        for r in rows:
            b = r.get(col, 0)
            if b:
                g = gcd(a, b)
                fa, fb = a // g, b // g
                new = {}
                for key in set(r) | set(piv_row):
                    val = fa * r.get(key, 0) - fb * piv_row.get(key, 0)
                    if val:
                        new[key] = val
                r = new
                if r:
                    cg = 0
                    for val in r.values():
                        cg = gcd(cg, val)
                    r = {key: val // cg for key, val in r.items()}
            if r:
                nxt.append(r)
        rows = nxt
    return rank


class Presentation:
    """Generators, relators, maximal tree and the canonical section."""

    def __init__(self, c: Complex, tree: Tree):
        if set(tree.parent) != set(c.vertices):
            raise InvalidParameter("tree does not span the complex")
        self.complex = c
        self.tree = tree
        gens = [(v, v) for v in c.vertices]
        for i, j in c.edges:
            gens += [(i, j), (j, i)]
        self.generators = sorted(gens)
        self._gen_set = frozenset(self.generators)

        relators = []
        for i, j in sorted(tree.tree_edges):
            relators += [Word.letter(i, j), Word.letter(j, i)]
        relators += [Word.letter(v, v) for v in c.vertices]
        triples = set()
        for s in c.maximal_simplices:
            triples.update(itertools.product(s, repeat=3))
        self.triples = sorted(triples)
        relators += [Word(((i, j, 1), (j, k, 1), (i, k, -1))) for i, j, k in self.triples]
        self.relators = relators

        self.section_table = {g: self._section(g) for g in self.generators}

    def is_tree_generator(self, g: Edge) -> bool:
        return self.tree.contains(*g)

    def _section(self, g: Edge) -> Word:
        if self.is_tree_generator(g):
            return Word()
        return Word.letter(*g)

    def section(self, g: Edge) -> Word:
        g = tuple(g)
        if g not in self._gen_set:
            raise UnknownGenerator(f"{g} is not a generator")
        return self.section_table[g]

    def g_word(self, g: Edge) -> Word:
        """``s(gamma_ij) <i,j>^-1``, an element of the kernel of the quotient map."""
        return self.section(g) * Word.letter(g[0], g[1], -1)

    @cached_property
    def non_tree_generators(self) -> list:
        return [g for g in self.generators if not self.is_tree_generator(g)]

    @cached_property
    def ascending_non_tree(self) -> list:
        return [g for g in self.non_tree_generators if g[0] < g[1]]

    @cached_property
    def abelian_rank(self) -> int:
        """Rank of the abelianisation (first Betti number), exact integer arithmetic."""
        idx = {g: n for n, g in enumerate(self.generators)}
        rows = []
        for w in self.relators:
            r = {}
            for i, j, e in w.letters:
                r[idx[(i, j)]] = r.get(idx[(i, j)], 0) + e
            rows.append({key: v for key, v in r.items() if v})
        return len(self.generators) - _int_rank(rows)

    @cached_property
    def L(self) -> int:
        """Length of a longest simple path from the root (controls every constant)."""
        return longest_path_length(self.complex, self.tree.root)

    @cached_property
    def forced_trivial(self) -> frozenset:
        """Generators shown trivial by propagating tree letters through triangle relators."""
        dead = {g for g in self.generators if self.is_tree_generator(g)}
        changed = True
        while changed:
            changed = False
            for i, j, k in self.triples:
                tri = [(i, j), (j, k), (i, k)]
                alive = [g for g in tri if g not in dead]
                if len(alive) == 1:
                    dead.add(alive[0])
                    changed = True
            for i, j in list(dead):
                if (j, i) not in dead:
                    dead.add((j, i))
                    changed = True
        return frozenset(dead)

    @property
    def trivial_group(self) -> Optional[bool]:
        """True if every generator is forced trivial, False if H_1 has positive rank, else None."""
        if len(self.forced_trivial) == len(self.generators):
            return True
        if self.abelian_rank > 0:
            return False
        return None

    @property
    def delta0(self) -> float:
        return 1.0 / (140 * self.L)

    def to_json(self) -> dict:
        return {
            "root": self.tree.root,
            "tree_edges": [list(e) for e in sorted(self.tree.tree_edges)],
            "generators": [list(g) for g in self.generators],
            "relators": [[list(a) for a in w.letters] for w in self.relators],
            "section": {f"{g[0]},{g[1]}": [list(a) for a in w.letters]
                        for g, w in self.section_table.items()},
        }


def presentation(c: Complex, tree: Optional[Tree] = None) -> Presentation:
    return Presentation(c, tree if tree is not None else maximal_tree(c))


def section(p: Presentation, g: Edge) -> Word:
    return p.section(g)


def _inv(m: np.ndarray, letter) -> np.ndarray:
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[-1] <= 1e-14 * max(sv[0], 1.0):
        raise SingularLetterValue(f"value of {letter} is not invertible")
    return np.linalg.inv(m)


def evaluate_word(values: Mapping, w: Word, dim: Optional[int] = None) -> np.ndarray:
    """Evaluate the free-group homomorphism determined by ``values`` on ``w``.

    Missing degenerate letters evaluate to the identity; a missing ``(i, j)``
    is derived as the inverse of ``(j, i)``.
    """
    if dim is None:
        dim = next(iter(values.values())).shape[0]
    out = np.eye(dim, dtype=complex)
    for i, j, e in w.letters:
        if (i, j) in values:
            m = values[(i, j)]
            m = m if e == 1 else _inv(m, (i, j))
        elif i == j:
            m = np.eye(dim)
        elif (j, i) in values:
            m = values[(j, i)]
            m = _inv(m, (j, i)) if e == 1 else m
        else:
            raise UnknownGenerator(f"no value for letter {(i, j)}")
        out = out @ m
    return out


def edge_images(p: Presentation) -> dict:
    """Image of every generator in the free abelian group H_1 (as integer tuples).

    Available for the builtin families (``torus_grid`` -> Z^2, ``circle_cycle``
    -> Z), where it is computed by lifting the tree to the universal cover:
    the image of ``(i, j)`` is the deck translation closing the loop
    root -> i -> j -> root.
    """
    fam = p.complex.family
    if fam is None or fam[0] not in ("torus_grid", "circle_cycle"):
        raise InvalidParameter("edge images are only available for torus_grid and circle_cycle")
    n = fam[1]
    if fam[0] == "torus_grid":
        def pos(v):
            return np.array([v % n, v // n])
    else:
        def pos(v):
            return np.array([v])

    def disp(i, j):
        d = (pos(j) - pos(i) + 1) % n - 1
        return d

    lift = {p.tree.root: pos(p.tree.root)}
    for v in sorted(p.tree.parent, key=lambda v: len(p.tree.path(v))):
        par = p.tree.parent[v]
        if par is not None:
            lift[v] = lift[par] + disp(par, v)
    out = {}
    for i, j in p.generators:
        img = (lift[i] + disp(i, j) - lift[j])
        assert np.all(img % n == 0)
        out[(i, j)] = tuple(int(x) for x in img // n)
    return out

"""Path-interpolated coordinate cocycles on the dual-cell cover.

For an ascending edge ``i < j`` and a simplex sigma containing it, the
transition function on the block c_ij^sigma is the multilinear interpolation

    v_ij(s) = sum_I lambda_I(s) u_I,    lambda_I(s) = prod_{i<k<j, k in sigma} s'_k

over ascending paths I from i to j inside sigma, with ``s'_k = s_k`` if
``k`` is on the path and ``1 - s_k`` otherwise (modified barycentric
coordinates).  An ascending path is itself a simplex, so coefficients are
stored once per path and shared by every block containing it.  For
``i > j`` the transition function is the pointwise inverse.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .complex import BaryPoint, Complex, block_point
from .errors import (
    DimensionMismatch,
    InvalidParameter,
    PointOutsideOverlap,
    SingularBarycenterValue,
    SingularValueAtPoint,
)
from .presentation import Tree
from .qrep import dist_to_unitary, op_norm, op_norms

EXACT_TOL = 1e-10


def _between(sigma, i, j) -> tuple:
    return tuple(v for v in sigma if i < v < j)


def _grid(dim: int, resolution: int) -> np.ndarray:
    if dim == 0:
        return np.zeros((1, 0))
    axis = np.linspace(0.0, 1.0, resolution)
    return np.array(list(itertools.product(axis, repeat=dim)))


def path_weights(s: np.ndarray) -> np.ndarray:
    """Weights of all subsets of the between-vertices, for points ``s`` of shape (n, m).

    Column ``mask`` (bit b set = b-th between-vertex on the path) holds
    ``lambda_I``; the columns sum to one.
    """
    s = np.atleast_2d(s)
    n, m = s.shape
    out = np.ones((n, 2 ** m))
    for mask in range(2 ** m):
        for b in range(m):
            out[:, mask] *= s[:, b] if mask >> b & 1 else 1.0 - s[:, b]
    return out


@dataclass
class FlatnessReport:
    eps_unit: float
    eps_osc: float
    eps_cocycle: float
    eps_unit_upper: float
    eps_osc_upper: float
    resolution: int
    eps_osc_ascending: float = 0.0
    rows: list = field(default_factory=list, repr=False)

    @property
    def epsilon(self) -> float:
        """Measured flatness (ascending oscillation exact, other fields sampled)."""
        return max(self.eps_unit, self.eps_osc)

    @property
    def epsilon_upper(self) -> float:
        """Certified upper bound for the flatness."""
        return max(self.eps_unit_upper, self.eps_osc_upper)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["edge", "eps_unit", "eps_osc", "eps_cocycle"])
        for row in self.rows:
            w.writerow([f"{row[0][0]}-{row[0][1]}"] + [f"{x:.12g}" for x in row[1:]])
        return buf.getvalue()


class InterpolatedCocycle:
    """Coordinate cocycle given by one coefficient matrix per ascending path."""

    def __init__(self, c: Complex, coeffs: Mapping, check: bool = True):
        self.complex = c
        self.coeffs = {tuple(I): np.asarray(m, dtype=complex) for I, m in coeffs.items()}
        self.k = next(iter(self.coeffs.values())).shape[0] if self.coeffs else 1
        if check:
            need = {s for s in c.simplices if len(s) >= 2}
            if set(self.coeffs) != need:
                raise InvalidParameter("coefficients must be given for exactly the simplices of dim >= 1")
            for I, m in self.coeffs.items():
                if m.shape != (self.k, self.k):
                    raise DimensionMismatch(f"coefficient of {I} has shape {m.shape}")
                if np.linalg.svd(m, compute_uv=False)[-1] <= 1e-14:
                    raise SingularValueAtPoint(f"coefficient u_{I} is not invertible")

    # ---- structure ----------------------------------------------------
    def paths(self, i, j, sigma) -> list:
        """Ascending paths from ``i`` to ``j`` inside ``sigma``, ordered by bitmask."""
        b = _between(sigma, i, j)
        return [tuple(sorted((i, j) + tuple(x for n, x in enumerate(b) if mask >> n & 1)))
                for mask in range(2 ** len(b))]

    def all_paths(self, i, j) -> list:
        return sorted(I for I in self.coeffs if I[0] == i and I[-1] == j)

    def ascending_edges(self) -> list:
        return list(self.complex.edges)

    def bary_value(self, i, j) -> np.ndarray:
        """Value at the barycenter of the edge <i, j>."""
        if i < j:
            return self.coeffs[(i, j)]
        if i == j:
            return np.eye(self.k, dtype=complex)
        m = self.coeffs[(j, i)]
        if np.linalg.svd(m, compute_uv=False)[-1] <= 1e-14:
            raise SingularBarycenterValue(f"barycenter value of {(j, i)} is singular")
        return np.linalg.inv(m)

    # ---- evaluation ---------------------------------------------------
    def _stack(self, i, j, sigma) -> np.ndarray:
        return np.array([self.coeffs[I] for I in self.paths(i, j, sigma)])

    def values_on_block(self, i, j, sigma, s_between: np.ndarray) -> np.ndarray:
        """Ascending values at points of c_ij^sigma given by their between-coordinates."""
        w = path_weights(s_between)
        return np.einsum("np,pab->nab", w, self._stack(i, j, sigma))

    def evaluate(self, i, j, p: BaryPoint, tol: float = 1e-12) -> np.ndarray:
        if i == j:
            return np.eye(self.k, dtype=complex)
        if (min(i, j), max(i, j)) not in self.complex.edge_set:
            raise PointOutsideOverlap(f"<{i},{j}> is not an edge")
        sigma = p.simplex
        m = p.t.max()
        if i not in sigma or j not in sigma or min(p.coord(i), p.coord(j)) < m - tol:
            raise PointOutsideOverlap(f"point is not in c_{i}{j}")
        a, b = min(i, j), max(i, j)
        ta = p.coord(a)
        s = np.array([[p.coord(x) / ta for x in _between(sigma, a, b)]])
        val = self.values_on_block(a, b, sigma, np.clip(s, 0.0, 1.0))[0]
        if i < j:
            return val
        if np.linalg.svd(val, compute_uv=False)[-1] <= 1e-14:
            raise SingularValueAtPoint(f"v_{b}{a} is singular at {p.t}")
        return np.linalg.inv(val)

    # ---- constructors / transforms -------------------------------------
    def map_coeffs(self, f) -> "InterpolatedCocycle":
        return InterpolatedCocycle(self.complex, {I: f(I, m) for I, m in self.coeffs.items()})

    def to_json(self) -> dict:
        entries = []
        for i, j in self.complex.edges:
            for sigma in self.complex.cofaces((i, j)):
                for I in self.paths(i, j, sigma):
                    m = self.coeffs[I]
                    entries.append({"i": i, "j": j, "sigma": list(sigma), "path": list(I),
                                    "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in m]})
        return {"k": self.k, "entries": entries}

    @classmethod
    def from_json(cls, c: Complex, data: Mapping) -> "InterpolatedCocycle":
        coeffs = {}
        for e in data["entries"]:
            arr = np.array(e["matrix"], dtype=float)
            m = arr[..., 0] + 1j * arr[..., 1]
            I = tuple(e["path"])
            if I in coeffs and not np.allclose(coeffs[I], m, atol=1e-14):
                raise InvalidParameter(f"inconsistent coefficients for path {I}")
            coeffs[I] = m
        return cls(c, coeffs)


def path_cocycle(c: Complex, edge_values: Mapping) -> InterpolatedCocycle:
    """Cocycle with ``u_I = u_{i1 i2} ... u_{i(m-1) im}`` from values on ascending edges."""
    coeffs = {}
    for I in c.simplices:
        if len(I) < 2:
            continue
        m = edge_values[(I[0], I[1])]
        for a, b in zip(I[1:], I[2:]):
            m = m @ edge_values[(a, b)]
        coeffs[I] = m
    return InterpolatedCocycle(c, coeffs)


def constant_cocycle(c: Complex, k: int = 1) -> InterpolatedCocycle:
    eye = np.eye(k, dtype=complex)
    return InterpolatedCocycle(c, {I: eye for I in c.simplices if len(I) >= 2})


def direct_sum(a: InterpolatedCocycle, b: InterpolatedCocycle) -> InterpolatedCocycle:
    def blk(x, y):
        out = np.zeros((len(x) + len(y),) * 2, dtype=complex)
        out[:len(x), :len(x)] = x
        out[len(x):, len(x):] = y
        return out
    return InterpolatedCocycle(a.complex, {I: blk(a.coeffs[I], b.coeffs[I]) for I in a.coeffs})


def perturb_coefficients(v: InterpolatedCocycle, scale: float, rng: np.random.Generator) -> InterpolatedCocycle:
    """Multiply every coefficient by ``1 + scale * E`` with random ``||E|| = 1``."""
    def bump(I, m):
        e = rng.standard_normal((v.k, v.k)) + 1j * rng.standard_normal((v.k, v.k))
        return m @ (np.eye(v.k) + scale * e / op_norm(e))
    return v.map_coeffs(bump)


# ---- diagnostics ---------------------------------------------------------
def _maximal_cofaces(c: Complex, face) -> list:
    return [s for s in c.maximal_simplices if set(face) <= set(s)]


def _inv_stack(vals: np.ndarray, where) -> np.ndarray:
    sv = np.linalg.svd(vals, compute_uv=False)
    if np.any(sv[:, -1] <= 1e-14):
        raise SingularValueAtPoint(f"interpolated value is singular on {where}")
    return np.linalg.inv(vals)


def flatness(v: InterpolatedCocycle, resolution: int = 9) -> FlatnessReport:
    """Flatness diagnostics.

    The ascending oscillation is exact: interpolated values are convex
    combinations of the path coefficients and every coefficient is attained
    at a cube corner, so the sup is the largest pairwise coefficient
    difference.  Unitarity and the descending (inverse) direction are
    sampled on a grid of ``resolution`` points per axis; the ``*_upper``
    fields add Lipschitz certificates.
    """
    c = v.complex
    h = 1.0 / (resolution - 1)
    unit = osc = osc_asc_all = 0.0
    unit_up = osc_up = 0.0
    cocycle_by_edge = _cocycle_by_edge(v)
    rows = []
    for i, j in c.edges:
        paths = v.all_paths(i, j)
        stack = np.array([v.coeffs[I] for I in paths])
        diffs = [op_norm(stack[a] - stack[b]) for a in range(len(stack)) for b in range(a + 1, len(stack))]
        osc_asc = max(diffs, default=0.0)
        osc_asc_all = max(osc_asc_all, osc_asc)
        u_ij = v.coeffs[(i, j)]
        r = max(op_norm(m - u_ij) for m in stack)

        e_unit = e_unit_desc = e_osc_desc = 0.0
        nb_max = 0
        for sigma in _maximal_cofaces(c, (i, j)):
            nb = len(_between(sigma, i, j))
            nb_max = max(nb_max, nb)
            vals = v.values_on_block(i, j, sigma, _grid(nb, resolution))
            inv = _inv_stack(vals, (i, j, sigma))
            sv = np.linalg.svd(vals, compute_uv=False)
            e_unit = max(e_unit, float(np.abs(sv - 1).max()))
            isv = np.linalg.svd(inv, compute_uv=False)
            e_unit_desc = max(e_unit_desc, float(np.abs(isv - 1).max()))
            for a in range(len(inv)):
                e_osc_desc = max(e_osc_desc, float(op_norms(inv[a + 1:] - inv[a]).max(initial=0.0)))
        # descending values: all pairs across blocks, the grids share the edge barycenter
        e_osc_desc = max(e_osc_desc, _cross_block_inverse_osc(v, i, j, resolution))

        unit_asc_up = e_unit + nb_max * (h / 2) * osc_asc
        a_inv = op_norm(np.linalg.inv(u_ij))
        if a_inv * r < 1:
            mbound = a_inv / (1 - a_inv * r)
            osc_desc_up = mbound ** 2 * osc_asc
            unit_desc_up = mbound * unit_asc_up
        else:
            osc_desc_up = unit_desc_up = float("inf")

        e_u = max(e_unit, e_unit_desc)
        e_o = max(osc_asc, e_osc_desc)
        unit, osc = max(unit, e_u), max(osc, e_o)
        unit_up = max(unit_up, unit_asc_up, unit_desc_up)
        osc_up = max(osc_up, osc_asc, osc_desc_up)
        rows.append(((i, j), e_u, e_o, cocycle_by_edge.get((i, j), 0.0)))
    eps_c = max(cocycle_by_edge.values(), default=0.0)
    return FlatnessReport(unit, osc, eps_c, max(unit_up, unit), max(osc_up, osc), resolution,
                          eps_osc_ascending=osc_asc_all, rows=rows)


def _cross_block_inverse_osc(v, i, j, resolution) -> float:
    c = v.complex
    blocks = _maximal_cofaces(c, (i, j))
    if len(blocks) < 2:
        return 0.0
    invs = [np.linalg.inv(v.values_on_block(i, j, s, _grid(len(_between(s, i, j)), resolution))) for s in blocks]
    allv = np.concatenate(invs)
    best = 0.0
    for a in range(len(allv)):
        best = max(best, float(op_norms(allv[a + 1:] - allv[a]).max(initial=0.0)))
    return best


def _cocycle_by_edge(v: InterpolatedCocycle, resolution: int = 5) -> dict:
    c = v.complex
    out = {}
    for tri in c.triangles:
        i, j, k = tri
        worst = 0.0
        for sigma in _maximal_cofaces(c, tri):
            free = [x for x in sigma if x not in tri]
            for pt in _grid(len(free), resolution):
                p = block_point(sigma, tri, dict(zip(free, pt)))
                lhs = v.evaluate(i, k, p)
                rhs = v.evaluate(i, j, p) @ v.evaluate(j, k, p)
                worst = max(worst, op_norm(lhs - rhs))
        for e in ((i, j), (j, k), (i, k)):
            out[e] = max(out.get(e, 0.0), worst)
    return out


def cocycle_residual(v: InterpolatedCocycle, resolution: int = 5) -> float:
    """``max ||v_ik(x) - v_ij(x) v_jk(x)||`` over 2-simplices and sample points of c_ijk."""
    return max(_cocycle_by_edge(v, resolution).values(), default=0.0)


def restriction_residual(v: InterpolatedCocycle, samples: int = 20, rng: Optional[np.random.Generator] = None) -> float:
    """Compare evaluation through a simplex with evaluation through a codimension-one face.

    For sigma~ = sigma + {l} and a point of c_ij^sigma, the value computed in
    sigma~ (with ``t_l = 0``) must equal the value computed in sigma.
    """
    rng = rng or np.random.default_rng(0)
    c = v.complex
    worst = 0.0
    for big in c.simplices:
        if len(big) < 3:
            continue
        for l in big:
            small = tuple(x for x in big if x != l)
            for i, j in itertools.combinations(small, 2):
                free = [x for x in small if x not in (i, j)]
                for _ in range(samples):
                    vals = dict(zip(free, rng.uniform(size=len(free))))
                    p_small = block_point(small, (i, j), vals)
                    p_big = BaryPoint(big, [p_small.coord(x) for x in big])
                    for a, b in ((i, j), (j, i)):
                        worst = max(worst, op_norm(v.evaluate(a, b, p_big) - v.evaluate(a, b, p_small)))
    return worst


def is_normalized(v: InterpolatedCocycle, tree: Tree, tol: float = 1e-12) -> bool:
    eye = np.eye(v.k)
    return all(op_norm(v.coeffs[e] - eye) <= tol for e in tree.tree_edges)


def tree_gauge(v: InterpolatedCocycle, tree: Tree) -> dict:
    """``lambda_i`` = product of barycenter values along the tree path root -> i."""
    out = {}
    for x in tree.parent:
        path = tree.path(x)
        m = np.eye(v.k, dtype=complex)
        for a, b in zip(path, path[1:]):
            m = m @ v.bary_value(a, b)
        out[x] = m
    return out


def normalize(v: InterpolatedCocycle, tree: Tree) -> InterpolatedCocycle:
    """Gauge transform ``w_ij = lambda_i v_ij lambda_j^-1`` making tree barycenter values 1.

    Applied in closed form on coefficients, ``u_I -> lambda_i u_I lambda_j^-1``.
    """
    for a, b in tree.tree_edges:
        if np.linalg.svd(v.coeffs[(a, b)], compute_uv=False)[-1] <= 1e-14:
            raise SingularBarycenterValue(f"barycenter value of {(a, b)} is singular")
    return gauge_transform(v, tree_gauge(v, tree))


def gauge_transform(v: InterpolatedCocycle, lam: Mapping) -> InterpolatedCocycle:
    """``u_I -> lam_i u_I lam_j^-1`` for a path I from i to j."""
    lam_inv = {x: np.linalg.inv(m) for x, m in lam.items()}
    return v.map_coeffs(lambda I, m: lam[I[0]] @ m @ lam_inv[I[-1]])


def bundle_distance(a: InterpolatedCocycle, b: InterpolatedCocycle, resolution: int = 9) -> float:
    """``max_<i,j> max_x ||a_ij(x) - b_ij(x)||`` over both edge directions.

    Ascending direction exact (difference of convex combinations with equal
    weights); descending direction sampled on a grid.
    """
    if a.k != b.k or a.complex != b.complex:
        raise DimensionMismatch("cocycles live on different complexes or fibers")
    if set(a.coeffs) != set(b.coeffs):
        raise DimensionMismatch("coefficient sets do not align")
    keys = sorted(a.coeffs)
    asc = float(op_norms(np.array([a.coeffs[I] - b.coeffs[I] for I in keys])).max())
    desc = 0.0
    c = a.complex
    for i, j in c.edges:
        for sigma in _maximal_cofaces(c, (i, j)):
            g = _grid(len(_between(sigma, i, j)), resolution)
            ia = _inv_stack(a.values_on_block(i, j, sigma, g), (i, j))
            ib = _inv_stack(b.values_on_block(i, j, sigma, g), (i, j))
            desc = max(desc, float(op_norms(ia - ib).max()))
    return max(asc, desc)

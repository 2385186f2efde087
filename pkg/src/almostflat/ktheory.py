"""Mishchenko idempotent, push-forward along a quasi-representation, Chern numbers.

Two independent routes to the first Chern number on an oriented surface:

* :func:`chern_cech` works on a cocycle (usually ``beta(q)``) and sums
  continuously tracked phases of ``det v_ij`` around every triangle;
* :func:`chern_curvature` works on the projection field obtained by
  substituting ``q`` into the Mishchenko idempotent and applying the Riesz
  projection, and integrates ``tr(P [dP, dP]) / 2 pi i``.

The two share no code beyond the complex and the quasi-representation.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .bundle import InterpolatedCocycle, _between, cocycle_residual
from .complex import BaryPoint, Complex, surface_orientation
from .correspondence import beta
from .errors import (
    BranchTrackingFailure,
    DefectTooLarge,
    InvalidParameter,
    NotAlmostIdempotent,
    QuadratureNonConvergent,
    SupportViolation,
)
from .presentation import Presentation
from .qrep import QuasiRep, defect

IDEMPOTENT_DOMAIN = 0.25


# ---- partition of unity ----------------------------------------------------
class PartitionOfUnity:
    """``chi_i = g_i / sum_j g_j`` with ``g_i = max(0, t_i - max_j t_j / 2)^2``.

    ``chi_i`` is supported where ``t_i > max t / 2``, so overlapping supports
    always span a simplex.  A custom ``func(point) -> {vertex: value}`` can be
    supplied instead (used to exercise the support checks).
    """

    name = "squared-hinge"

    def __init__(self, c: Complex, func: Optional[Callable] = None):
        self.complex = c
        self.func = func
        if func is not None:
            self.name = "custom"

    def values(self, p: BaryPoint) -> dict:
        if self.func is not None:
            return dict(self.func(p))
        w = self.local_weights(p.simplex, p.t[None, :])[0]
        return dict(zip(p.simplex, w))

    def local_weights(self, simplex, T: np.ndarray) -> np.ndarray:
        """``chi`` at barycentric points ``T`` (n, m) of ``simplex``, shape (n, m)."""
        if self.func is not None:
            out = []
            for t in T:
                vals = self.values(BaryPoint(simplex, t))
                out.append([vals.get(v, 0.0) for v in simplex])
            return np.array(out)
        g = np.maximum(0.0, T - 0.5 * T.max(axis=1, keepdims=True)) ** 2
        return g / g.sum(axis=1, keepdims=True)

    def local_sqrt(self, simplex, T: np.ndarray) -> np.ndarray:
        if self.func is not None:
            return np.sqrt(self.local_weights(simplex, T))
        h = np.maximum(0.0, T - 0.5 * T.max(axis=1, keepdims=True))
        return h / np.sqrt((h ** 2).sum(axis=1, keepdims=True))


def partition_of_unity(c: Complex) -> PartitionOfUnity:
    return PartitionOfUnity(c)


def _sample_points(c: Complex, resolution: int = 7):
    """Barycentric lattice points of every maximal simplex."""
    for s in c.maximal_simplices:
        m = len(s)
        for comb in itertools.product(range(resolution + 1), repeat=m - 1):
            if sum(comb) <= resolution:
                t = np.array((resolution - sum(comb),) + comb, dtype=float) / resolution
                yield BaryPoint(s, t)


def check_support(c: Complex, pou: PartitionOfUnity, resolution: int = 7) -> None:
    """Raise :class:`SupportViolation` unless overlapping supports span simplices."""
    for p in _sample_points(c, resolution):
        pos = sorted(v for v, x in pou.values(p).items() if x > 0)
        for face in itertools.chain(itertools.combinations(pos, 2), itertools.combinations(pos, 3)):
            if not c.is_simplex(face):
                raise SupportViolation(f"chi supports of {face} meet at {p.t} in {p.simplex} but do not span a simplex")


# ---- Mishchenko idempotent --------------------------------------------------
@dataclass
class FormalIdempotent:
    """``e = sum_ij e_ij (x) chi_i^1/2 chi_j^1/2 (x) gamma_ij`` with group elements kept formal."""

    presentation: Presentation
    pou: PartitionOfUnity

    @property
    def N(self) -> int:
        return len(self.presentation.complex.vertices)

    def entries(self, p: BaryPoint) -> dict:
        """Nonzero entries at ``p`` as ``{(i, j): coefficient}``; entry (i, j) carries gamma_ij."""
        chi = {v: x for v, x in self.pou.values(p).items() if x > 0}
        return {(i, j): float(np.sqrt(chi[i] * chi[j])) for i in chi for j in chi}

    def square(self, p: BaryPoint) -> dict:
        """``e(p)^2`` as a group-ring valued matrix, rewritten with the triangle relators.

        ``gamma_ik gamma_kj`` is replaced by ``gamma_ij``, which is legitimate
        exactly when ``(i, k, j)`` is a vertex triple of a simplex.
        """
        triples = self._triples
        ent = self.entries(p)
        out: dict = {}
        for (i, k), a in ent.items():
            for (k2, j), b in ent.items():
                if k2 != k:
                    continue
                if (i, k, j) not in triples:
                    raise SupportViolation(f"cannot rewrite gamma_{i}{k} gamma_{k}{j}: no simplex contains them")
                out[(i, j)] = out.get((i, j), 0.0) + a * b
        return out

    @property
    def _triples(self) -> frozenset:
        return frozenset(self.presentation.triples)

    def idempotency_residual(self, points) -> float:
        worst = 0.0
        for p in points:
            e, e2 = self.entries(p), self.square(p)
            for key in set(e) | set(e2):
                worst = max(worst, abs(e2.get(key, 0.0) - e.get(key, 0.0)))
        return worst


def mishchenko_idempotent(c: Complex, pou: PartitionOfUnity, p: Presentation, resolution: int = 7) -> FormalIdempotent:
    if p.complex != c:
        raise InvalidParameter("presentation does not belong to the complex")
    check_support(c, pou, resolution)
    return FormalIdempotent(p, pou)


# ---- Riesz projection -------------------------------------------------------
def _is_hermitian(x: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.abs(x - np.swapaxes(x.conj(), -1, -2)).max() <= tol * max(1.0, np.abs(x).max()))


def idempotent_defect(x: np.ndarray) -> float:
    return float(np.linalg.norm(x @ x - x, 2))


def riesz_projection(x: np.ndarray, method: str = "eig", check: bool = True,
                     radius: float = 0.5, points: int = 64) -> np.ndarray:
    """Spectral projection of ``x`` onto the eigenvalues with real part above 1/2.

    ``method="eig"`` sums spectral projectors; ``method="contour"`` applies
    the trapezoidal rule to ``(1/2 pi i) oint (z - x)^-1 dz`` on the circle
    ``|z - 1| = radius``.  When ``||x^2 - x|| < 1/4`` every eigenvalue of the
    upper part lies in ``|z - 1| < 1/2``, so the default radius encloses it.
    """
    x = np.asarray(x, dtype=complex)
    if check:
        r = idempotent_defect(x)
        if r >= IDEMPOTENT_DOMAIN:
            raise NotAlmostIdempotent(r)
    if method == "eig":
        return _riesz_batch(x[None])[0][0]
    if method == "contour":
        n = len(x)
        acc = np.zeros((n, n), dtype=complex)
        for th in 2 * np.pi * (np.arange(points) + 0.5) / points:
            z = 1 + radius * np.exp(1j * th)
            acc += np.linalg.solve(z * np.eye(n) - x, np.eye(n)) * (radius * np.exp(1j * th))
        return acc / points
    raise InvalidParameter(f"unknown method {method!r}")


def _riesz_batch(xs: np.ndarray):
    """Batched projection; returns ``(P, eigenvalues)``."""
    if _is_hermitian(xs):
        xs = 0.5 * (xs + np.swapaxes(xs.conj(), -1, -2))
        w, vec = np.linalg.eigh(xs)
        sel = vec * (w > 0.5)[:, None, :]
        return sel @ np.swapaxes(vec.conj(), -1, -2), w.astype(complex)
    w, vec = np.linalg.eig(xs)
    inv = np.linalg.inv(vec)
    return (vec * (w.real > 0.5)[:, None, :]) @ inv, w


# ---- push-forward -------------------------------------------------------------
class ProjectionField:
    """Projection-valued field ``P(x) = chi((id (x) q)(e)(x))`` of size ``N k``.

    Over a simplex only the ``chi`` of its own vertices are nonzero, so all
    work happens on the ``m k x m k`` block of that simplex; :meth:`evaluate`
    embeds it into the full matrix.

    ``domain="defect"`` requires ``||x^2 - x|| < 1/4`` at every evaluated
    point.  ``domain="gap"`` only requires the spectrum to stay at distance
    ``gap_tol`` from the line ``Re z = 1/2``, which is what the Riesz
    projection needs to be well defined and smooth.
    """

    def __init__(self, q: QuasiRep, e: FormalIdempotent, domain: str = "defect", gap_tol: float = 1e-2):
        if domain not in ("defect", "gap"):
            raise InvalidParameter(f"unknown domain {domain!r}")
        self.q = q
        self.e = e
        self.complex = q.presentation.complex
        self.k = q.k
        self.domain = domain
        self.gap_tol = gap_tol
        self.max_idempotent_defect = 0.0
        self.min_gap = np.inf
        self.rank: Optional[int] = None
        self._blocks = {}

    def block_matrix(self, simplex) -> np.ndarray:
        """``[q(gamma_ab)]_{a,b in simplex}`` with ``q(gamma_aa) = 1``."""
        if simplex not in self._blocks:
            k, m = self.k, len(simplex)
            out = np.zeros((m * k, m * k), dtype=complex)
            for (x, a), (y, b) in itertools.product(enumerate(simplex), repeat=2):
                out[x * k:(x + 1) * k, y * k:(y + 1) * k] = self.q[(a, b)]
            self._blocks[simplex] = out
        return self._blocks[simplex]

    def local_x(self, simplex, T: np.ndarray) -> np.ndarray:
        w = np.repeat(self.e.pou.local_sqrt(simplex, T), self.k, axis=1)
        return self.block_matrix(simplex)[None] * (w[:, :, None] * w[:, None, :])

    def local_P(self, simplex, T: np.ndarray) -> np.ndarray:
        xs = self.local_x(simplex, T)
        P, w = _riesz_batch(xs)
        if _is_hermitian(xs):
            dfc = np.abs(w * (w - 1)).max(axis=1)
        else:
            dfc = np.linalg.norm(xs @ xs - xs, 2, axis=(1, 2))
        bad = int(np.argmax(dfc))
        self.max_idempotent_defect = max(self.max_idempotent_defect, float(dfc[bad]))
        if self.domain == "defect":
            if dfc[bad] >= IDEMPOTENT_DOMAIN:
                raise NotAlmostIdempotent(dfc[bad], (simplex, tuple(T[bad])))
        gap = np.abs(w.real - 0.5).min(axis=1)
        bad = int(np.argmin(gap))
        self.min_gap = min(self.min_gap, float(gap[bad]))
        if gap[bad] <= self.gap_tol:
            raise NotAlmostIdempotent(float(np.linalg.norm(xs[bad] @ xs[bad] - xs[bad], 2)), (simplex, tuple(T[bad])))
        ranks = (w.real > 0.5).sum(axis=1)
        if self.rank is None:
            self.rank = int(ranks[0])
        if np.any(ranks != self.rank):
            raise NotAlmostIdempotent(float("nan"), (simplex, "rank changes"))
        return P

    def evaluate(self, p: BaryPoint) -> np.ndarray:
        c, k = self.complex, self.k
        n = len(c.vertices)
        out = np.zeros((n * k, n * k), dtype=complex)
        blk = self.local_P(p.simplex, p.t[None, :])[0]
        idx = np.concatenate([np.arange(c.index(v) * k, (c.index(v) + 1) * k) for v in p.simplex])
        out[np.ix_(idx, idx)] = blk
        return out

    def x_at(self, p: BaryPoint) -> np.ndarray:
        """The un-projected almost idempotent ``(id (x) q)(e)`` at ``p`` (full size)."""
        c, k = self.complex, self.k
        n = len(c.vertices)
        out = np.zeros((n * k, n * k), dtype=complex)
        for (i, j), coef in self.e.entries(p).items():
            a, b = c.index(i), c.index(j)
            out[a * k:(a + 1) * k, b * k:(b + 1) * k] = coef * self.q[(i, j)]
        return out

    def scan(self, resolution: int = 12) -> None:
        """Evaluate on a barycentric lattice of every maximal simplex (domain and rank checks).

        Use a resolution divisible by 6 so that edge midpoints and triangle
        barycenters, where the idempotent defect peaks, are sampled.
        """
        for s in self.complex.maximal_simplices:
            pts = np.array([p.t for p in _sample_points_of(s, resolution)])
            self.local_P(s, pts)


def _sample_points_of(simplex, resolution):
    m = len(simplex)
    for comb in itertools.product(range(resolution + 1), repeat=m - 1):
        if sum(comb) <= resolution:
            yield BaryPoint(simplex, np.array((resolution - sum(comb),) + comb, dtype=float) / resolution)


def pushforward(q: QuasiRep, e: Optional[FormalIdempotent] = None, domain: str = "defect",
                gap_tol: float = 1e-2, resolution: int = 12) -> ProjectionField:
    if e is None:
        c = q.presentation.complex
        e = mishchenko_idempotent(c, partition_of_unity(c), q.presentation)
    f = ProjectionField(q, e, domain, gap_tol)
    f.scan(resolution)
    return f


# ---- reports ------------------------------------------------------------------
@dataclass
class KClassReport:
    rank: int
    c1: int
    raw_cech: Optional[float] = None
    raw_curvature: Optional[float] = None
    residuals: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"rank": self.rank, "c1": self.c1, "raw_cech": self.raw_cech,
                           "raw_curvature": self.raw_curvature, "residuals": self.residuals,
                           "grid": self.grid}, sort_keys=True)


# ---- Cech phase sum ---------------------------------------------------------------
def _tracked_phase(v: InterpolatedCocycle, i, j, sigma, base_steps: int, max_level: int) -> float:
    """Continuous ``arg det v_ij`` from the edge barycenter to the barycenter of ``sigma``."""
    nb = len(_between(sigma, i, j))
    start = np.angle(np.linalg.det(v.coeffs[(i, j)]))
    if nb == 0:
        return float(start)

    def det_at(tau):
        return np.linalg.det(v.values_on_block(i, j, sigma, np.full((1, nb), tau))[0])

    def refine(a, za, b, zb, level):
        m = 0.5 * (a + b)
        zm = det_at(m)
        if min(abs(za), abs(zm), abs(zb)) == 0:
            raise BranchTrackingFailure(f"det v_{i}{j} vanishes on the tracked path in {sigma}")
        d, dl, dr = np.angle(zb / za), np.angle(zm / za), np.angle(zb / zm)
        if abs(dl) < np.pi / 2 and abs(dr) < np.pi / 2 and abs(dl + dr - d) < 1e-9:
            return d
        if level >= max_level:
            raise BranchTrackingFailure(f"phase increment of det v_{i}{j} in {sigma} not resolved after {max_level} bisections")
        return refine(a, za, m, zm, level + 1) + refine(m, zm, b, zb, level + 1)

    taus = np.linspace(0.0, 1.0, base_steps + 1)
    zs = [det_at(t) for t in taus]
    total = start
    for a, b, za, zb in zip(taus, taus[1:], zs, zs[1:]):
        total += refine(a, za, b, zb, 0)
    return float(total)


def chern_cech(v: InterpolatedCocycle, base_steps: int = 8, max_level: int = 20,
               cocycle_tol: float = 1e-8) -> KClassReport:
    """First Chern number of a cocycle over an oriented closed surface.

    ``c1 = sum_sigma eps_sigma (theta_ac - theta_ab - theta_bc) / 2 pi`` over
    triangles ``a < b < c``, where ``theta_ij`` is ``arg det v_ij`` tracked
    continuously from the barycenter of ``<i, j>`` to the barycenter of the
    triangle and ``eps_sigma`` is the orientation sign of the ascending
    order.  For an exact cocycle every triangle term is an integer.  The
    overall sign is the one matching :func:`chern_curvature`.
    """
    c = v.complex
    orient = surface_orientation(c)
    res = cocycle_residual(v)
    if res > cocycle_tol:
        raise InvalidParameter(f"cocycle residual {res:.3g} exceeds {cocycle_tol:.3g}")
    raw = 0.0
    worst_tri = 0.0
    for tri in c.triangles:
        a, b, cc = tri
        w = (_tracked_phase(v, a, cc, tri, base_steps, max_level)
             - _tracked_phase(v, a, b, tri, base_steps, max_level)
             - _tracked_phase(v, b, cc, tri, base_steps, max_level)) / (2 * np.pi)
        worst_tri = max(worst_tri, abs(w - round(w)))
        raw += orient[tri] * w
    c1 = int(round(raw))
    return KClassReport(rank=v.k, c1=c1, raw_cech=raw,
                        residuals={"cech": abs(raw - c1), "cech_triangle": worst_tri, "cocycle": res},
                        grid={"base_steps": base_steps, "max_level": max_level})


# ---- curvature integral -----------------------------------------------------------
# degree-5 seven-point rule on the reference triangle (barycentric points, weights sum to 1)
_A1, _B1, _W1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
_A2, _B2, _W2 = 0.797426985353087, 0.101286507323456, 0.125939180544827
QUAD_BARY = np.array([[1 / 3, 1 / 3, 1 / 3],
                      [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
                      [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2]])
QUAD_W = np.array([0.225] + [_W1] * 3 + [_W2] * 3)


def _chart_to_t(uv: np.ndarray) -> np.ndarray:
    return np.column_stack([1 - uv[:, 0] - uv[:, 1], uv[:, 0], uv[:, 1]])


def _clip(poly: list, f) -> tuple:
    """Split a convex polygon by the sign of an affine function ``f``."""
    pos, neg = [], []
    for a, b in zip(poly, poly[1:] + poly[:1]):
        fa, fb = f(a), f(b)
        if fa >= 0:
            pos.append(a)
        if fa <= 0:
            neg.append(a)
        if (fa > 0 and fb < 0) or (fa < 0 and fb > 0):
            x = a + (b - a) * (fa / (fa - fb))
            pos.append(x)
            neg.append(x)
    return pos, neg


def _area(poly) -> float:
    x = np.array(poly)
    return 0.5 * abs(np.dot(x[:, 0], np.roll(x[:, 1], -1)) - np.dot(x[:, 1], np.roll(x[:, 0], -1)))


def smooth_pieces(min_area: float = 1e-14) -> list:
    """Triangles of the chart ``t = (1-u-v, u, v)`` on which the default ``chi^1/2`` is smooth.

    The kinks of ``chi^1/2`` lie on the lines ``t_a = t_b`` (the maximum
    switches) and ``t_x = t_max / 2`` (a hinge turns on), so the triangle is
    cut into its six chambers and each chamber along its two hinge lines.
    """
    corners = [np.array(x, dtype=float) for x in ((0, 0), (1, 0), (0, 1))]
    mids = {(a, b): 0.5 * (corners[a] + corners[b]) for a in range(3) for b in range(3)}
    center = sum(corners) / 3
    pieces = []
    for m1, m2, _ in itertools.permutations(range(3)):
        polys = [[corners[m1], mids[(m1, m2)], center]]
        for x in range(3):
            if x == m1:
                continue

            def f(pt, x=x, m1=m1):
                t = np.array([1 - pt[0] - pt[1], pt[0], pt[1]])
                return t[x] - 0.5 * t[m1]
            nxt = []
            for poly in polys:
                for part in _clip(poly, f):
                    if len(part) >= 3 and _area(part) > min_area:
                        nxt.append(part)
            polys = nxt
        for poly in polys:
            for a, b in zip(poly[1:-1], poly[2:]):
                if _area([poly[0], a, b]) > min_area:
                    pieces.append(np.array([poly[0], a, b]))
    return pieces


def _refine(tris: list, levels: int) -> list:
    for _ in range(levels):
        nxt = []
        for a, b, c in tris:
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt += [np.array(x) for x in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]
        tris = nxt
    return tris


def _quadrature_nodes(levels: int):
    tris = _refine(smooth_pieces(), levels)
    pts, wts = [], []
    for tri in tris:
        pts.append(QUAD_BARY @ tri)
        wts.append(QUAD_W * _area(tri))
    return np.concatenate(pts), np.concatenate(wts)


def _curvature_density(field: ProjectionField, tri, uv: np.ndarray, h: float) -> np.ndarray:
    """``tr(P [d_u P, d_v P]) / 2 pi i`` at chart points ``uv`` (central differences)."""
    n = len(uv)
    shifts = np.array([[0, 0], [h, 0], [-h, 0], [0, h], [0, -h]])
    allpts = (uv[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
    P = field.local_P(tri, _chart_to_t(allpts)).reshape(5, n, *field.block_matrix(tri).shape)
    pu = (P[1] - P[2]) / (2 * h)
    pv = (P[3] - P[4]) / (2 * h)
    comm = pu @ pv - pv @ pu
    f = np.einsum("nab,nba->n", P[0], comm)
    return (f / (2j * np.pi)).real


def chern_curvature(field: ProjectionField, h: float = 1e-4, levels: int = 1,
                    richardson_tol: float = 1e-2) -> KClassReport:
    """Chern-Weil integral ``(1/2 pi i) int tr(P [d_u P, d_v P]) du dv`` over the surface.

    Each triangle ``a < b < c`` is integrated in the chart ``t = (1-u-v, u, v)``
    and weighted by its orientation sign.  The integrand is only piecewise
    smooth (see :func:`smooth_pieces`), so the degree-5 rule is applied on the
    smooth pieces, each refined ``levels`` times.  The raw value is
    recomputed with step ``h/2``; a change above ``richardson_tol`` raises
    :class:`QuadratureNonConvergent`.
    """
    c = field.complex
    orient = surface_orientation(c)
    uv, wts = _quadrature_nodes(levels)
    raws = []
    for step in (h, h / 2):
        total = 0.0
        for tri in c.triangles:
            total += orient[tri] * float(np.dot(wts, _curvature_density(field, tri, uv, step)))
        raws.append(total)
    change = abs(raws[0] - raws[1])
    if change > richardson_tol:
        raise QuadratureNonConvergent(f"raw curvature changed by {change:.3g} when halving the step")
    raw = raws[1]
    c1 = int(round(raw))
    return KClassReport(rank=int(field.rank), c1=c1, raw_curvature=raw,
                        residuals={"curvature": abs(raw - c1), "richardson": change,
                                   "max_idempotent_defect": field.max_idempotent_defect,
                                   "min_spectral_gap": field.min_gap},
                        grid={"h": h, "levels": levels, "nodes_per_triangle": len(uv),
                              "pou": field.e.pou.name, "domain": field.domain})


# ---- both sides ---------------------------------------------------------------------
@dataclass
class PairingReport:
    bundle: KClassReport
    pushforward: KClassReport
    defect: float

    @property
    def ranks_agree(self) -> bool:
        return self.bundle.rank == self.pushforward.rank

    @property
    def c1_agree(self) -> bool:
        return self.bundle.c1 == self.pushforward.c1

    @property
    def ok(self) -> bool:
        return self.ranks_agree and self.c1_agree


def verify_pairing(q: QuasiRep, delta0: Optional[float] = None, check: bool = True,
                  domain: str = "defect", gap_tol: float = 1e-2, levels: int = 1) -> PairingReport:
    """Compare the class of ``beta(q)`` (phase sums) with the push-forward class (curvature).

    The bundle ``beta(q)`` has fiber dimension ``k`` while the push-forward
    field has rank ``k`` inside ``C^(N k)``; both ranks are reported.
    """
    p = q.presentation
    d = defect(q).delta
    if check:
        thr = p.delta0 if delta0 is None else delta0
        if d >= thr:
            raise DefectTooLarge(d, thr)
    cech = chern_cech(beta(q, check=False))
    curv = chern_curvature(pushforward(q, domain=domain, gap_tol=gap_tol), levels=levels)
    return PairingReport(cech, curv, d)


# name used by the documented interface
verify_prop84 = verify_pairing

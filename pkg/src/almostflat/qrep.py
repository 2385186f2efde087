"""Matrix-valued quasi-representations on the edge generators.

A :class:`QuasiRep` assigns an invertible k x k matrix to every directed
edge generator.  Tree edges and degenerate edges carry the identity, and the
value of ``(j, i)`` is the inverse of the value of ``(i, j)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DefectTooLarge, DimensionMismatch, InvalidParameter, SingularMatrix, WrongComplexFamily
from .presentation import Presentation, edge_images

PERTURB_MAX_DEFECT = 1.0 / 7.0


def op_norm(m: np.ndarray) -> float:
    """Operator (spectral) norm."""
    return float(np.linalg.norm(m, 2))


def op_norms(ms: np.ndarray) -> np.ndarray:
    """Operator norms of a stack of matrices."""
    if len(ms) == 0:
        return np.zeros(0)
    return np.linalg.svd(ms, compute_uv=False)[..., 0]


def dist_to_unitary(m: np.ndarray) -> float:
    """Distance to the unitary group in operator norm: ``max |s - 1|`` over singular values."""
    s = np.linalg.svd(np.asarray(m), compute_uv=False)
    return float(np.max(np.abs(s - 1.0)))


def _polar_newton(v: np.ndarray, tol: float = 1e-12, maxiter: int = 100) -> np.ndarray:
    x = v.astype(complex)
    for _ in range(maxiter):
        nxt = 0.5 * (x + np.linalg.inv(x).conj().T)
        if np.linalg.norm(nxt - x, 2) <= tol * np.linalg.norm(nxt, 2):
            return nxt
        x = nxt
    return x


def unitarize(v: np.ndarray) -> np.ndarray:
    """Unitary polar factor ``v (v* v)^(-1/2)``.

    The inverse square root comes from the eigendecomposition of the positive
    definite ``v* v``; a Newton polar iteration takes over when the result is
    not unitary to 1e-10 (ill-conditioned input).
    """
    v = np.asarray(v, dtype=complex)
    w, q = np.linalg.eigh(v.conj().T @ v)
    if w[0] <= 1e-20:
        raise SingularMatrix("unitarize needs an invertible matrix")
    u = v @ (q * w ** -0.5) @ q.conj().T
    eye = np.eye(len(v))
    if np.linalg.norm(u.conj().T @ u - eye, 2) > 1e-10:
        u = _polar_newton(v)
    return u


class QuasiRep:
    """Values of a quasi-representation on the generators of a presentation."""

    def __init__(self, presentation: Presentation, values: Mapping, check: bool = True):
        self.presentation = presentation
        self.values = {tuple(g): np.asarray(m, dtype=complex) for g, m in values.items()}
        missing = [g for g in presentation.generators if g not in self.values]
        if missing:
            raise InvalidParameter(f"no value for generators {missing[:5]}")
        self.k = next(iter(self.values.values())).shape[0]
        if check:
            self._check()

    def _check(self):
        eye = np.eye(self.k)
        p = self.presentation
        for g, m in self.values.items():
            if m.shape != (self.k, self.k) or not np.all(np.isfinite(m)):
                raise InvalidParameter(f"bad value for {g}")
            if p.is_tree_generator(g) and not np.array_equal(m, eye):
                raise InvalidParameter(f"tree/degenerate generator {g} must map to the identity")
        for i, j in p.generators:
            if i < j:
                a, b = self.values[(i, j)], self.values[(j, i)]
                err = np.linalg.norm(a @ b - eye, 2)
                if err > 1e-8 * (1 + np.linalg.norm(a, 2) * np.linalg.norm(b, 2)):
                    raise InvalidParameter(f"value of {(j, i)} is not the inverse of {(i, j)}")

    def __getitem__(self, g) -> np.ndarray:
        return self.values[tuple(g)]

    @classmethod
    def from_ascending(cls, p: Presentation, values: Mapping, k: Optional[int] = None,
                       reverse: str = "inverse") -> "QuasiRep":
        """Build from values on ascending non-tree edges; reverse edges get the inverse
        (or the adjoint with ``reverse="adjoint"``) and everything else the identity."""
        if k is None:
            k = next(iter(values.values())).shape[0] if values else 1
        eye = np.eye(k, dtype=complex)
        out = {g: eye.copy() for g in p.generators}
        for g in p.ascending_non_tree:
            m = np.asarray(values.get(g, eye), dtype=complex)
            out[g] = m
            out[(g[1], g[0])] = m.conj().T if reverse == "adjoint" else np.linalg.inv(m)
        return cls(p, out)

    @classmethod
    def identity(cls, p: Presentation, k: int = 1) -> "QuasiRep":
        return cls.from_ascending(p, {}, k)

    def map_ascending(self, f) -> "QuasiRep":
        return QuasiRep.from_ascending(
            self.presentation, {g: f(g, self.values[g]) for g in self.presentation.ascending_non_tree}, self.k)

    def to_json(self) -> dict:
        gens = self.presentation.generators
        return {
            "k": self.k,
            "generators": [list(g) for g in gens],
            "values": [[[[float(z.real), float(z.imag)] for z in row] for row in self.values[g]] for g in gens],
        }

    @classmethod
    def from_json(cls, p: Presentation, data: Mapping) -> "QuasiRep":
        values = {}
        for g, m in zip(data["generators"], data["values"]):
            arr = np.array(m, dtype=float)
            values[tuple(g)] = arr[..., 0] + 1j * arr[..., 1]
        return cls(p, values)


@dataclass
class DefectReport:
    delta_mult: float
    delta_unit: float
    worst: Optional[tuple] = field(default=None)

    @property
    def delta(self) -> float:
        return max(self.delta_mult, self.delta_unit)


def _triple_residuals(q: QuasiRep, triples: Sequence) -> np.ndarray:
    v = q.values
    a = np.array([v[(i, j)] for i, j, _ in triples])
    b = np.array([v[(j, k)] for _, j, k in triples])
    c = np.array([v[(i, k)] for i, _, k in triples])
    return op_norms(a @ b - c)


def defect(q: QuasiRep, images: Optional[Mapping] = None) -> DefectReport:
    """Multiplicative defect over vertex triples of simplices, and distance to unitaries.

    ``images`` (for example :func:`edge_images`) is a word-problem oracle: when
    given, every pair of generators whose product equals a third generator in
    the group is also included.
    """
    p = q.presentation
    triples = [t for t in p.triples]
    res = _triple_residuals(q, triples)
    n = int(np.argmax(res)) if len(res) else None
    mult, worst = (float(res[n]), triples[n]) if n is not None else (0.0, None)
    if images is not None:
        by_image = {}
        for g in p.generators:
            by_image.setdefault(tuple(images[g]), []).append(g)
        gens = p.generators
        for g1 in gens:
            for g2 in gens:
                tgt = tuple(a + b for a, b in zip(images[g1], images[g2]))
                prod = q[g1] @ q[g2]
                for g3 in by_image.get(tgt, ()):
                    r = op_norm(prod - q[g3])
                    if r > mult:
                        mult, worst = r, (g1, g2, g3)
    unit = max(dist_to_unitary(m) for m in q.values.values())
    return DefectReport(mult, unit, worst)


def qrep_distance(a: QuasiRep, b: QuasiRep) -> float:
    """``max_g ||a(g) - b(g)||`` over the generators."""
    if a.k != b.k or a.presentation.generators != b.presentation.generators:
        raise DimensionMismatch("quasi-representations live on different presentations or fibers")
    gens = a.presentation.generators
    return float(op_norms(np.array([a[g] - b[g] for g in gens])).max())


def perturb(q: QuasiRep, check: bool = True, threshold: float = PERTURB_MAX_DEFECT) -> QuasiRep:
    """Unitary perturbation: unitarize the symmetrisation ``(pi(g) + pi(g^-1)^*) / 2``.

    Values on reversed edges are stored as exact adjoints.  Raises
    :class:`DefectTooLarge` when the defect is not below ``threshold``
    (1/7 by default) unless ``check`` is false.
    """
    if check:
        d = defect(q).delta
        if d >= threshold:
            raise DefectTooLarge(d, threshold)
    vals = {}
    for g in q.presentation.ascending_non_tree:
        sym = 0.5 * (q[g] + q[(g[1], g[0])].conj().T)
        vals[g] = unitarize(sym)
    return QuasiRep.from_ascending(q.presentation, vals, q.k, reverse="adjoint")


@dataclass
class PerturbationCheck:
    delta: float
    neutral: float        # ||breve(e) - 1|| over degenerate generators
    unitarity: float      # max distance to unitaries
    adjoint: float        # max ||breve(g^-1) - breve(g)^*||
    composable: float     # max composable-pair defect of breve
    distance: float       # max ||breve(g) - pi(g)||

    def passed(self) -> dict:
        d = self.delta
        return {
            "neutral": self.neutral == 0.0,
            "unitary": self.unitarity <= 1e-10,
            "adjoint": self.adjoint <= 1e-12,
            "composable<70d": self.composable < 70 * d or self.composable <= 1e-12,
            "distance<20d": self.distance < 20 * d or self.distance <= 1e-12,
        }

    @property
    def ok(self) -> bool:
        return all(self.passed().values())


def check_perturbation(q: QuasiRep, qb: QuasiRep, delta: Optional[float] = None) -> PerturbationCheck:
    """Measure the five properties of a perturbed quasi-representation ``qb`` of ``q``."""
    p = q.presentation
    if delta is None:
        delta = defect(q).delta
    eye = np.eye(q.k)
    neutral = max(float(np.abs(qb[(v, v)] - eye).max()) for v in p.complex.vertices)
    gens = p.generators
    unit = max(dist_to_unitary(qb[g]) for g in gens)
    adj = max(float(np.abs(qb[(j, i)] - qb[(i, j)].conj().T).max()) for i, j in gens)
    comp = float(_triple_residuals(qb, p.triples).max())
    dist = qrep_distance(q, qb)
    return PerturbationCheck(delta, neutral, unit, adj, comp, dist)


def clock_shift_pair(k: int):
    """Unitaries U (clock) and V (shift) with ``V U = exp(2 pi i / k) U V``."""
    w = np.exp(2j * np.pi / k)
    u = np.diag(w ** np.arange(k))
    v = np.roll(np.eye(k, dtype=complex), -1, axis=0)  # V e_j = e_{j-1}
    return u, v


def abelian_pullback(p: Presentation, mats: Sequence, images: Optional[Mapping] = None) -> QuasiRep:
    """Pull back ``Z^r -> GL_k`` given by ``n -> mats[0]^n_0 ... mats[r-1]^n_{r-1}``.

    For commuting unitaries this is an exact representation; for the
    clock/shift pair it is the standard almost-commuting quasi-representation.
    """
    if images is None:
        images = edge_images(p)
    k = mats[0].shape[0]
    vals = {}
    for g in p.ascending_non_tree:
        m = np.eye(k, dtype=complex)
        for a, n in zip(mats, images[g]):
            m = m @ np.linalg.matrix_power(a, n)
        vals[g] = m
    return QuasiRep.from_ascending(p, vals, k)


def clock_shift_qrep(p: Presentation, k: int) -> QuasiRep:
    """Clock/shift quasi-representation of Z^2 pulled back to a torus_grid presentation."""
    fam = p.complex.family
    if fam is None or fam[0] != "torus_grid":
        raise WrongComplexFamily("clock_shift_qrep needs a torus_grid presentation")
    if int(k) != k or k < 1:
        raise InvalidParameter(f"k must be a positive integer, got {k}")
    return abelian_pullback(p, clock_shift_pair(int(k)))


def random_unitary(k: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def commuting_unitaries(k: int, r: int, rng: np.random.Generator) -> list:
    """``r`` random commuting unitaries sharing a random eigenbasis."""
    q = random_unitary(k, rng)
    return [q @ np.diag(np.exp(2j * np.pi * rng.uniform(size=k))) @ q.conj().T for _ in range(r)]


def exact_qrep(p: Presentation, k: int, rng: np.random.Generator) -> QuasiRep:
    """Genuine unitary representation of the (abelian) group, pulled back to the edges."""
    images = edge_images(p)
    r = len(next(iter(images.values())))
    return abelian_pullback(p, commuting_unitaries(k, r, rng), images)


def random_perturbation(q: QuasiRep, scale: float, rng: np.random.Generator) -> QuasiRep:
    """Multiply each ascending non-tree value by ``1 + scale * E`` with ``||E|| = 1`` random."""
    def bump(g, m):
        e = rng.standard_normal((q.k, q.k)) + 1j * rng.standard_normal((q.k, q.k))
        e /= op_norm(e)
        return m @ (np.eye(q.k) + scale * e)
    return q.map_ascending(bump)

"""The maps between quasi-representations and almost flat cocycles.

``alpha`` reads barycenter values of a cocycle along the maximal tree;
``beta`` perturbs a quasi-representation to a unitary one and interpolates
its products along ascending paths.  The round-trip helpers measure how far
``alpha . beta`` and ``beta . alpha`` move their inputs.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bundle import InterpolatedCocycle, bundle_distance, flatness, is_normalized, path_cocycle
from .complex import Complex
from .errors import DefectTooLarge, FlatnessTooLarge, InvalidParameter, NotNormalized, SingularBarycenterValue
from .presentation import Presentation
from .qrep import QuasiRep, defect, perturb, qrep_distance


def roundtrip_threshold(p: Presentation) -> float:
    """Default size threshold ``1 / (140 L 4^(L+1))`` for both round trips."""
    return 1.0 / (140 * p.L * 4 ** (p.L + 1))


def _tree_products(v: InterpolatedCocycle, p: Presentation) -> dict:
    out = {}
    for x in p.complex.vertices:
        path = p.tree.path(x)
        m = np.eye(v.k, dtype=complex)
        for a, b in zip(path, path[1:]):
            m = m @ v.bary_value(a, b)
        out[x] = m
    return out


def alpha(v: InterpolatedCocycle, p: Presentation) -> QuasiRep:
    """Quasi-representation ``gamma_ij -> vbar_I vbar_ij vbar_J^-1`` (I, J tree paths to i, j).

    With the canonical section tree and degenerate generators map to the
    identity.
    """
    if v.complex != p.complex:
        raise InvalidParameter("cocycle and presentation live on different complexes")
    for i, j in v.complex.edges:
        if np.linalg.svd(v.coeffs[(i, j)], compute_uv=False)[-1] <= 1e-14:
            raise SingularBarycenterValue(f"barycenter value of {(i, j)} is singular")
    lam = _tree_products(v, p)
    eye = np.eye(v.k, dtype=complex)
    vals = {}
    for g in p.generators:
        if p.is_tree_generator(g):
            vals[g] = eye.copy()
        else:
            i, j = g
            vals[g] = lam[i] @ v.bary_value(i, j) @ np.linalg.inv(lam[j])
    return QuasiRep(p, vals)


def beta(q: QuasiRep, c: Optional[Complex] = None, delta0: Optional[float] = None,
         check: bool = True, skip_perturbation: bool = False) -> InterpolatedCocycle:
    """Cocycle with ``u_I = u_{i1 i2} ... u_{i(m-1) im}``, ``u_ij`` the perturbed value on ``gamma_ij``.

    ``delta0`` defaults to ``1/(140 L)``; with ``check`` the defect must lie
    below it.  ``skip_perturbation`` uses ``q`` itself (meant for inputs that
    are already unitary).
    """
    p = q.presentation
    if c is not None and c != p.complex:
        raise InvalidParameter("complex does not match the presentation")
    if check:
        thr = p.delta0 if delta0 is None else delta0
        d = defect(q).delta
        if d >= thr:
            raise DefectTooLarge(d, thr)
    qb = q if skip_perturbation else perturb(q, check=False)
    return path_cocycle(p.complex, {e: qb[e] for e in p.complex.edges})


@dataclass
class RoundTripReport:
    input_size: float
    output_size: float
    roundtrip_distance: float

    @property
    def ratios(self) -> tuple:
        if self.input_size == 0:
            return (float("nan"), float("nan"))
        return (self.output_size / self.input_size, self.roundtrip_distance / self.input_size)

    def csv_row(self, family: str, parameter) -> list:
        return [family, parameter, f"{self.input_size:.12g}", f"{self.output_size:.12g}",
                f"{self.roundtrip_distance:.12g}", f"{self.ratios[1]:.12g}"]


CSV_HEADER = ["family", "parameter", "delta_or_eps", "image_size", "roundtrip_distance", "ratio"]


def reports_to_csv(rows) -> str:
    """``rows`` are ``(family, parameter, RoundTripReport)`` triples."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for fam, param, rep in rows:
        w.writerow(rep.csv_row(fam, param))
    return buf.getvalue()


def roundtrip_bundle(v: InterpolatedCocycle, p: Presentation, eps1: Optional[float] = None,
                     check: bool = True, resolution: int = 9) -> RoundTripReport:
    """Measure ``d(beta(alpha(v)), v)`` for a normalized cocycle."""
    if not is_normalized(v, p.tree, tol=1e-10):
        raise NotNormalized("tree barycenter values are not the identity")
    eps = flatness(v, resolution).epsilon
    if check:
        thr = roundtrip_threshold(p) if eps1 is None else eps1
        if eps >= thr:
            raise FlatnessTooLarge(eps, thr)
    q = alpha(v, p)
    w = beta(q, check=check)
    return RoundTripReport(eps, defect(q).delta, bundle_distance(w, v, resolution))


def roundtrip_qrep(q: QuasiRep, delta1: Optional[float] = None, check: bool = True,
                   resolution: int = 9) -> RoundTripReport:
    """Measure ``d(alpha(beta(q)), q)``."""
    p = q.presentation
    d = defect(q).delta
    if check:
        thr = roundtrip_threshold(p) if delta1 is None else delta1
        if d >= thr:
            raise DefectTooLarge(d, thr)
    w = beta(q, check=False)
    back = alpha(w, p)
    return RoundTripReport(d, flatness(w, resolution).epsilon, qrep_distance(back, q))

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from almostflat.bundle import direct_sum, path_cocycle
from almostflat.complex import BaryPoint, barycenter, build_complex
from almostflat.correspondence import beta
from almostflat.errors import (
    BranchTrackingFailure,
    DefectTooLarge,
    InvalidParameter,
    NotAlmostIdempotent,
    NotASurface,
    QuadratureNonConvergent,
    SupportViolation,
)
from almostflat.ktheory import (
    PartitionOfUnity,
    _sample_points,
    check_support,
    chern_cech,
    chern_curvature,
    idempotent_defect,
    mishchenko_idempotent,
    partition_of_unity,
    pushforward,
    riesz_projection,
    smooth_pieces,
    verify_pairing,
)
from almostflat.presentation import presentation
from almostflat.qrep import QuasiRep, clock_shift_qrep, exact_qrep, random_unitary


def _projection(n, r, rng):
    u = random_unitary(n, rng)
    return u[:, :r] @ u[:, :r].conj().T


def _near_idempotent(n, r, size, rng):
    """Similar-to-projection matrix plus a bump, non-normal in general."""
    s = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    x = s @ _projection(n, r, rng) @ np.linalg.inv(s)
    e = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return x + size * e / np.linalg.norm(e, 2)


# ---- partition of unity -----------------------------------------------------------
def test_pou_examples(torus3):
    pou = partition_of_unity(torus3)
    assert pou.values(BaryPoint((0, 1, 4), [1.0, 0.0, 0.0])) == {0: 1.0, 1: 0.0, 4: 0.0}
    mid = pou.values(barycenter((0, 1)))
    assert mid[0] == pytest.approx(0.5) and mid[1] == pytest.approx(0.5)
    third = pou.values(barycenter((0, 1, 4)))
    assert all(x == pytest.approx(1 / 3) for x in third.values())


@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).filter(lambda x: sum(x) > 1e-3))
def test_pou_sums_to_one_and_support(raw):
    t = np.array(raw) / sum(raw)
    c = build_complex([(0, 1, 2)])
    vals = PartitionOfUnity(c).values(BaryPoint((0, 1, 2), t))
    assert sum(vals.values()) == pytest.approx(1.0)
    for v, x in vals.items():
        assert (x > 0) == (t[v] > t.max() / 2)


def test_support_violation_custom(hollow3):
    # uniform weights make the supports of 0 and 1 meet inside edge (1, 2)
    pou = PartitionOfUnity(hollow3, lambda p: {v: 1 / 3 for v in hollow3.vertices})
    with pytest.raises(SupportViolation):
        check_support(hollow3, pou)
    check_support(hollow3, partition_of_unity(hollow3))


def test_mishchenko_single_vertex():
    c = build_complex([(0,)])
    e = mishchenko_idempotent(c, partition_of_unity(c), presentation(c))
    p = BaryPoint((0,), [1.0])
    assert e.entries(p) == {(0, 0): 1.0}
    assert e.square(p) == {(0, 0): 1.0}


@pytest.mark.parametrize("res", [5, 12])
def test_mishchenko_idempotency_residual(torus_pres, res):
    c = torus_pres.complex
    e = mishchenko_idempotent(c, partition_of_unity(c), torus_pres)
    assert e.idempotency_residual(_sample_points(c, res)) <= 1e-12


def test_mishchenko_rejects_foreign_presentation(torus3, hollow3):
    with pytest.raises(InvalidParameter):
        mishchenko_idempotent(torus3, partition_of_unity(torus3), presentation(hollow3))


# ---- Riesz projection --------------------------------------------------------------
def test_riesz_examples(rng):
    p = _projection(4, 2, rng)
    np.testing.assert_allclose(riesz_projection(p), p, atol=1e-12)
    np.testing.assert_allclose(riesz_projection(np.diag([0.9, 0.1])), np.diag([1, 0]), atol=1e-14)
    with pytest.raises(NotAlmostIdempotent):
        riesz_projection(np.diag([0.5, 0.5]))


@pytest.mark.parametrize("size", [0.0, 0.05, 0.15])
def test_riesz_properties(rng, size):
    for _ in range(20):
        x = _near_idempotent(5, 2, size, rng)
        if idempotent_defect(x) >= 0.25:
            continue
        P = riesz_projection(x)
        np.testing.assert_allclose(P @ P, P, atol=1e-9)
        np.testing.assert_allclose(P @ x, x @ P, atol=1e-9)
        np.testing.assert_allclose(riesz_projection(x, method="contour", points=256), P, atol=1e-8)
        assert round(np.trace(P).real) == 2


@given(st.integers(0, 2 ** 31))
def test_riesz_similarity_covariance(seed):
    rng = np.random.default_rng(seed)
    x = _near_idempotent(4, 1, 0.05, rng)
    s = np.eye(4) + 0.1 * rng.standard_normal((4, 4))
    si = np.linalg.inv(s)
    y = s @ x @ si
    if idempotent_defect(x) >= 0.25 or idempotent_defect(y) >= 0.25:
        return
    np.testing.assert_allclose(riesz_projection(y), s @ riesz_projection(x) @ si, atol=1e-8)


def test_riesz_unknown_method():
    with pytest.raises(InvalidParameter):
        riesz_projection(np.eye(2), method="magic")


# ---- push-forward ----------------------------------------------------------------
def test_trivial_pushforward_is_rank_one(torus_pres):
    field = pushforward(QuasiRep.identity(torus_pres, 1))
    assert field.rank == 1
    p = BaryPoint((0, 1, 4), [0.5, 0.3, 0.2])
    x = field.x_at(p)
    np.testing.assert_allclose(field.evaluate(p), x, atol=1e-12)
    chi = partition_of_unity(torus_pres.complex).values(p)
    w = np.zeros(9)
    for v, val in chi.items():
        w[v] = np.sqrt(val)
    np.testing.assert_allclose(x, np.outer(w, w), atol=1e-14)


def test_trivial_pushforward_c1_zero(torus_pres):
    rep = chern_curvature(pushforward(QuasiRep.identity(torus_pres, 1)))
    assert rep.rank == 1 and rep.c1 == 0 and abs(rep.raw_curvature) < 1e-10


def test_exact_rep_c1_zero(torus_pres, rng):
    q = exact_qrep(torus_pres, 2, rng)
    assert chern_curvature(pushforward(q)).c1 == 0
    assert chern_cech(beta(q)).c1 == 0


@pytest.mark.parametrize("k", [3, 4])
def test_small_k_outside_strict_domain(torus_pres, k):
    q = clock_shift_qrep(torus_pres, k)
    with pytest.raises(NotAlmostIdempotent):
        pushforward(q)
    field = pushforward(q, domain="gap")
    assert field.max_idempotent_defect >= 0.25 and field.min_gap > 0.01


def test_clock_shift_pushforward_k5(torus_pres):
    field = pushforward(clock_shift_qrep(torus_pres, 5))
    rep = chern_curvature(field)
    assert rep.rank == 5 and abs(rep.c1) == 1
    assert rep.residuals["curvature"] <= 1e-2
    assert field.max_idempotent_defect < 0.25


def test_unknown_domain(torus_pres):
    with pytest.raises(InvalidParameter):
        pushforward(QuasiRep.identity(torus_pres, 1), domain="loose")


def test_smooth_pieces_cover_reference_triangle():
    pieces = smooth_pieces()
    assert len(pieces) == 24
    area = sum(0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) for a, b, c in pieces)
    assert area == pytest.approx(0.5, abs=1e-12)


def test_richardson_guard(torus_pres):
    field = pushforward(clock_shift_qrep(torus_pres, 6))
    with pytest.raises(QuadratureNonConvergent):
        chern_curvature(field, richardson_tol=0.0)


# ---- Cech side ---------------------------------------------------------------------
@pytest.mark.parametrize("k", [3, 6, 12])
def test_cech_clock_shift(torus_pres, k):
    rep = chern_cech(beta(clock_shift_qrep(torus_pres, k), check=False))
    assert rep.c1 == -1 and rep.residuals["cech"] <= 1e-9


def test_cech_direct_sum_adds(torus_pres):
    v = beta(clock_shift_qrep(torus_pres, 4), check=False)
    w = beta(clock_shift_qrep(torus_pres, 6), check=False)
    assert chern_cech(direct_sum(v, w)).c1 == -2


def test_cech_homotopy_invariance(torus_pres, rng):
    q = clock_shift_qrep(torus_pres, 5)
    v = beta(q, check=False)
    base = chern_cech(v).c1
    for _ in range(3):
        edge = {e: v.coeffs[e] @ random_unitary_near(5, 0.05, rng) for e in torus_pres.complex.edges}
        assert chern_cech(path_cocycle(torus_pres.complex, edge)).c1 == base


def random_unitary_near(k, size, rng):
    h = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    h = size * (h + h.conj().T) / np.linalg.norm(h + h.conj().T, 2)
    w, vec = np.linalg.eigh(h)
    return (vec * np.exp(1j * w)) @ vec.conj().T


def test_cech_branch_failure(torus3):
    # a single -1 edge makes (1 - s) u_ac + s u_ab u_bc vanish at s = 1/2
    edge = {e: np.eye(1) for e in torus3.edges}
    edge[(0, 1)] = -np.eye(1)
    with pytest.raises(BranchTrackingFailure):
        chern_cech(path_cocycle(torus3, edge))


def test_cech_requires_surface(triangle, rng):
    with pytest.raises(NotASurface):
        chern_cech(beta(QuasiRep.identity(presentation(triangle), 1)))


def test_report_json(torus_pres):
    rep = chern_cech(beta(clock_shift_qrep(torus_pres, 3), check=False))
    data = json.loads(rep.to_json())
    assert data["c1"] == -1 and data["rank"] == 3 and "cech" in data["residuals"]


# ---- both sides together -----------------------------------------------------------
def test_verify_both_sides(torus_pres):
    rep = verify_pairing(clock_shift_qrep(torus_pres, 6), check=False)
    assert rep.ok and rep.bundle.c1 == -1


def test_verify_defect_check(torus_pres):
    with pytest.raises(DefectTooLarge):
        verify_pairing(clock_shift_qrep(torus_pres, 6))


def test_verify_trivial(torus_pres):
    rep = verify_pairing(QuasiRep.identity(torus_pres, 1))
    assert rep.ok and rep.bundle.c1 == 0 and rep.pushforward.rank == 1

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncresidue.clifford import TwistData, build_rep, clifford_of_covector, clifford_twist, trace
from ncresidue.errors import BadInput, ShapeError, Unsupported
from ncresidue.geometry import (
    build_metric,
    coframe_clifford,
    normal_coordinate_coeffs,
    random_curvature_tensor,
)
from ncresidue.jetring import X_VARS, Jet, JetMat

seeds = st.integers(min_value=0, max_value=2**32 - 1)
kinds = st.sampled_from(["spin", "exterior"])
fibers = st.integers(min_value=1, max_value=3)


def test_trace_of_identity():
    assert trace(build_rep(4, "spin", 1), np.eye(4)) == 4
    assert trace(build_rep(4, "exterior", 1), np.eye(16)) == 16


def test_distinct_generators_anticommute():
    rep = build_rep(4, "spin", 1)
    assert np.allclose(rep.c(0) @ rep.c(1) + rep.c(1) @ rep.c(0), 0)


def test_covector_action_examples():
    rep = build_rep(4, "exterior", 2)
    assert np.allclose(clifford_of_covector(rep, [1, 0, 0, 0]), rep.c(0))
    xi = np.array([0.5, -0.5, 0.5, 0.5])
    assert np.allclose(clifford_of_covector(rep, xi) @ clifford_of_covector(rep, xi), -np.eye(32))
    assert np.allclose(clifford_of_covector(rep, xi, True) @ clifford_of_covector(rep, xi, True), np.eye(32))


def test_errors():
    with pytest.raises(Unsupported):
        build_rep(3, "spin", 1)
    with pytest.raises(BadInput):
        build_rep(4, "spin", 0)
    with pytest.raises(Unsupported):
        clifford_of_covector(build_rep(4, "spin", 1), [1, 0, 0, 0], hatted=True)
    with pytest.raises(ShapeError):
        trace(build_rep(4, "spin", 2), np.eye(4))


def test_twist_pairing_with_gradient():
    # k = 1, Phi*(e_j) = 0.5 delta_j1, d_1 f = 2: sum_j Tr[c(e_j) c(df)] tr_F Phi*(e_j) = -(0.5 * 2) * 4
    rep = build_rep(4, "spin", 1)
    phis = [np.array([[0.5]])] + [np.zeros((1, 1))] * 3
    cdf = clifford_of_covector(rep, [2.0, 0, 0, 0])
    assert trace(rep, clifford_twist(rep, phis) @ cdf) == pytest.approx(-4.0)


@given(kinds, fibers)
def test_anticommutation_relations(kind, k):
    rep = build_rep(4, kind, k)
    one = np.eye(rep.module_dim)
    for i in range(4):
        for j in range(4):
            ci, cj = rep.c(i), rep.c(j)
            assert np.allclose(ci @ cj + cj @ ci, -2 * (i == j) * one, atol=1e-15)
            if kind == "exterior":
                hi, hj = rep.c_hat(i), rep.c_hat(j)
                assert np.allclose(hi @ hj + hj @ hi, 2 * (i == j) * one, atol=1e-15)
                assert np.allclose(ci @ hj + hj @ ci, 0, atol=1e-15)


@given(kinds)
def test_generator_traces(kind):
    rep = build_rep(4, kind, 1)
    d = rep.module_dim
    for i in range(4):
        for j in range(4):
            assert trace(rep, rep.c(i) @ rep.c(j)) == pytest.approx(-d * (i == j), abs=1e-14)
    for a, b, c in [(0, 1, 2), (1, 2, 3), (0, 1, 3)]:
        assert abs(trace(rep, rep.c(a) @ rep.c(b) @ rep.c(c))) < 1e-14
        assert abs(trace(rep, rep.c(a))) < 1e-14


@given(seeds, fibers)
def test_trace_is_cyclic_and_factorizes(seed, k):
    rng = np.random.default_rng(seed)
    rep = build_rep(4, "spin", k)
    a = rng.normal(size=(4 * k, 4 * k)) + 1j * rng.normal(size=(4 * k, 4 * k))
    b = rng.normal(size=(4 * k, 4 * k)) + 1j * rng.normal(size=(4 * k, 4 * k))
    assert trace(rep, a @ b) == pytest.approx(trace(rep, b @ a), rel=1e-12)
    x = rng.normal(size=(k, k))
    assert trace(rep, np.kron(rep.gamma[0] @ rep.gamma[0], x)) == pytest.approx(-4 * np.trace(x))


@given(seeds, st.floats(-2, 2), fibers, kinds)
def test_boundary_frame_traces(seed, hp, k, kind):
    """Trace identities of the collar frame with the full-module factor Tr[id] / 4 = k (spin)."""
    rng = np.random.default_rng(seed)
    rep = build_rep(4, kind, k)
    geom = build_metric("collar", hp, 0.0)
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    cdx = coframe_clifford(geom, rep)
    cxi = sum((cdx[j] * v[j] for j in range(1, 3)), cdx[0] * v[0])
    c_xi, c_n = cxi.constant_part(), cdx[3].constant_part()
    d_xi = cxi.derive("x4").constant_part()
    unit = rep.module_dim / 4
    assert abs(trace(rep, c_xi @ c_n)) < 1e-12
    assert trace(rep, c_n @ c_n) == pytest.approx(-4 * unit, abs=1e-12)
    assert trace(rep, c_xi @ c_xi) == pytest.approx(-4 * unit, abs=1e-12)
    assert abs(trace(rep, d_xi @ c_n)) < 1e-12
    assert trace(rep, d_xi @ c_xi) == pytest.approx(-2 * hp * unit, abs=1e-12)


# conformal trace identities in normal coordinates ---------------------------


def _setup(seed: int, k: int):
    rng = np.random.default_rng(seed)
    geom = build_metric("interior", quad_coeffs=normal_coordinate_coeffs(random_curvature_tensor(rng)))
    rep = build_rep(4, "spin", k)
    terms = {(): rng.uniform(0.5, 1.5)}
    for i, a in enumerate(X_VARS):
        terms[(a,)] = rng.uniform(-1, 1)
        for b in X_VARS[i:]:
            terms[(a, b)] = rng.uniform(-1, 1)
    f = Jet.from_terms(terms)
    phi = [rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)) for _ in range(4)]
    cdx = coframe_clifford(geom, rep)
    # c(d_i) = g_ij c(dx_j)
    cvec = []
    for i in range(4):
        acc = JetMat.zeros(rep.module_dim, rep.module_dim)
        for j in range(4):
            acc = acc + cdx[j] * geom.g.entry(i, j)
        cvec.append(acc)
    cdf_finv = JetMat.zeros(rep.module_dim, rep.module_dim)
    for j in range(4):
        cdf_finv = cdf_finv + cdx[j] * (f.derive(X_VARS[j]) * f.inverse())
    grad = np.array([f.partial(v) for v in X_VARS])
    lap = sum(f.partial(v, v) for v in X_VARS)
    return rep, f, phi, cvec, cdf_finv, grad, lap


@given(seeds, fibers)
def test_conformal_trace_identities(seed, k):
    rep, f, phi, cvec, cdf_finv, grad, lap = _setup(seed, k)
    f0 = f.value
    base = 4.0  # Tr[id] on the untwisted spinor module
    grad_finv = -grad / f0**2
    expected = (-lap / f0 - grad @ grad_finv) * base * k
    lhs = sum(trace(rep, cvec[i].constant_part() @ cdf_finv.derive(X_VARS[i]).constant_part()) for i in range(4))
    assert lhs == pytest.approx(expected, rel=1e-10)
    lhs2 = sum(trace(rep, (cvec[i] @ cdf_finv).derive(X_VARS[i]).constant_part()) for i in range(4))
    assert lhs2 == pytest.approx(expected, rel=1e-10)
    phis = [p.conj().T for p in phi]
    cphis = clifford_twist(rep, phis)
    cdf = cdf_finv.constant_part() * f0
    tr_grad = np.trace(sum(grad[i] * phis[i] for i in range(4)))
    assert trace(rep, cphis @ cdf) == pytest.approx(-tr_grad * base, rel=1e-10)


@given(seeds, fibers)
def test_quadratic_conformal_traces(seed, k):
    """Fully contracted products, evaluated with sum_i c(e_i) c(v) c(e_i) = 2 c(v) in four dimensions."""
    rep, f, phi, cvec, cdf_finv, grad, lap = _setup(seed, k)
    f0 = f.value
    c = [cv.constant_part() for cv in cvec]
    m = cdf_finv.constant_part()
    grad_sq = grad @ grad
    lhs = sum(trace(rep, c[i] @ m @ c[i] @ m) for i in range(4))
    assert lhs == pytest.approx(-2 * grad_sq / f0**2 * 4 * k, rel=1e-10)
    cphi = clifford_twist(rep, phi)
    cphis = clifford_twist(rep, [p.conj().T for p in phi])
    tr_phi = np.trace(sum(grad[i] * phi[i] for i in range(4)))
    tr_phis = np.trace(sum(grad[i] * phi[i].conj().T for i in range(4)))
    lhs5 = sum(trace(rep, cphis @ rep.c(i) @ c[i] @ m) for i in range(4))
    assert lhs5 == pytest.approx(16 * tr_phis / f0, rel=1e-10)
    lhs6 = sum(trace(rep, rep.c(i) @ cphi @ c[i] @ m) for i in range(4))
    assert lhs6 == pytest.approx(-8 * tr_phi / f0, rel=1e-10)


def test_twist_data_validation():
    with pytest.raises(BadInput):
        TwistData.trivial(1, Jet.constant(0.0))
    with pytest.raises(BadInput):
        TwistData.from_constants(2, phi=[np.eye(3)] * 4)
    tw = TwistData.from_constants(1, phi=[np.array([[1j]])] * 4)
    assert tw.phi_star[0].constant_part()[0, 0] == -1j

from dataclasses import replace

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from sympy.physics.quantum import TensorProduct

from ncresidue.boundary import (
    CaseIndex,
    boundary_density,
    enumerate_cases,
    paper_boundary_closed_form,
    random_rotation,
    sphere_integrate,
    sphere_measure,
)
from ncresidue.cli import Scenario, scenario_inputs
from ncresidue.clifford import TwistData
from ncresidue.errors import BadInput, QuadratureDegree, Unsupported
from ncresidue.geometry import build_metric
from ncresidue.jetring import Jet, JetMat

seeds = st.integers(min_value=0, max_value=2**32 - 1)
OMEGA = 4 * np.pi
FAST = settings(max_examples=3)


def _inputs(op, k, seed, **kw):
    inp = scenario_inputs(Scenario(op, fiber_dim=k, seed=seed, **kw))
    return build_metric("collar", inp.h_prime0, inp.h_double_prime0), inp.twist


def _zero(k):
    return tuple(JetMat.zeros(k, k) for _ in range(4))


def _conformal(f: Jet) -> complex:
    """f d_n(f^-1) - f^-1 d_n f at the base point."""
    finv = f.inverse()
    return f.value * finv.partial("x4") - finv.value * f.partial("x4")


def _trace_n(tw: TwistData) -> complex:
    p = tw.phi[3].constant_part()
    return np.trace(p + p.conj().T)


# sphere quadrature ---------------------------------------------------------


def test_sphere_integral_examples():
    assert sphere_integrate(lambda v: 1.0, 0).real == pytest.approx(4 * np.pi)
    assert sphere_integrate(lambda v: v[0] ** 2, 2).real == pytest.approx(4 * np.pi / 3)
    assert abs(sphere_integrate(lambda v: v[0] * v[1], 2)) < 1e-14
    assert sphere_measure() == pytest.approx(OMEGA)
    with pytest.raises(QuadratureDegree):
        sphere_integrate(lambda v: 1.0, 11)


@given(seeds, st.integers(0, 5), st.integers(0, 5))
def test_sphere_rule_is_rotation_invariant_on_low_degree(seed, a, b):
    rng = np.random.default_rng(seed)
    rot = random_rotation(rng)

    def fn(v):
        return v[0] ** a * v[2] ** b

    assert sphere_integrate(fn, a + b, rot) == pytest.approx(sphere_integrate(fn, a + b), abs=1e-12)


# index tuples --------------------------------------------------------------


def test_case_enumeration():
    groups = enumerate_cases(4)
    assert list(groups) == ["aI", "aII", "aIII", "b", "c"]
    assert len(groups["aI"]) == 3
    assert {len(groups[g]) for g in ("aII", "aIII", "b", "c")} == {1}
    assert groups["aII"][0] == CaseIndex(-1, -1, 0, 1)
    assert groups["aIII"][0] == CaseIndex(-1, -1, 1, 0)
    assert groups["b"][0] == CaseIndex(-2, -1, 0, 0)
    assert groups["c"][0] == CaseIndex(-1, -2, 0, 0)
    assert [idx.prefactor for idx in groups["aI"]] == [-1, -1, -1]
    assert groups["aII"][0].prefactor == pytest.approx(-0.5)
    assert groups["b"][0].prefactor == pytest.approx(-1j)
    with pytest.raises(Unsupported):
        enumerate_cases(3)
    with pytest.raises(BadInput):
        CaseIndex(0, -1, 0, 0)


# engine values -------------------------------------------------------------


def test_trivial_inputs_give_zero():
    geom = build_metric("collar", 0.0, 0.0)
    for op in ("dirac", "signature"):
        d = boundary_density(op, geom, TwistData.trivial(1))
        assert abs(d.total) < 1e-12
        assert d.total == pytest.approx(sum(d.per_case.values()))


@FAST
@given(seeds, st.sampled_from(["dirac", "signature"]))
def test_tangential_case_vanishes(seed, op):
    geom, tw = _inputs(op, 1, seed)
    d = boundary_density(op, geom, tw)
    assert abs(d.per_case["aI"]) < 1e-9
    assert d.total == pytest.approx(sum(d.per_case.values()), abs=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_untwisted_normal_case_geometry_term(k):
    geom = build_metric("collar", 0.7, 0.1)
    d = boundary_density("dirac", geom, TwistData.trivial(k))
    assert d.per_case["aII"] == pytest.approx(-3 / 8 * np.pi * 0.7 * k * OMEGA, abs=1e-10)
    assert d.per_case["aIII"] == pytest.approx(3 / 8 * np.pi * 0.7 * k * OMEGA, abs=1e-10)


@FAST
@given(seeds, st.sampled_from(["dirac", "signature"]))
def test_geometry_parts_cancel(seed, op):
    """With f = 1 and no twist, the second fundamental form drops out of a(II)+a(III) and of b+c."""
    geom, _ = _inputs(op, 1, seed)
    d = boundary_density(op, geom, TwistData.trivial(1))
    assert abs(d.per_case["aII"] + d.per_case["aIII"]) < 1e-9
    assert abs(d.per_case["b"] + d.per_case["c"]) < 1e-9
    assert abs(d.total) < 1e-9


@FAST
@given(seeds)
def test_conformal_normal_cases(seed):
    """a(II)+a(III) carry the f-dependence, scaled by Tr[id] / 4 = k."""
    geom, tw = _inputs("dirac", 2, seed)
    tw = TwistData.trivial(2, tw.f)
    d = boundary_density("dirac", geom, tw)
    expected = 1j * 2 * (np.pi * 1j / 2) * OMEGA * _conformal(tw.f)
    assert d.per_case["aII"] + d.per_case["aIII"] == pytest.approx(expected, rel=1e-9, abs=1e-10)


@FAST
@given(seeds, st.sampled_from(["dirac", "signature"]))
def test_total_is_independent_of_h_double_prime_and_orientation(seed, op):
    geom, tw = _inputs(op, 1, seed)
    d1 = boundary_density(op, geom, tw)
    other = build_metric("collar", geom.h_prime0, geom.h_double_prime0 + 0.9)
    d2 = boundary_density(op, other, tw, rotation=random_rotation(np.random.default_rng(seed)))
    assert d2.total == pytest.approx(d1.total, rel=1e-9, abs=1e-10)
    for name in d1.per_case:
        assert d2.per_case[name] == pytest.approx(d1.per_case[name], rel=1e-9, abs=1e-10)


@FAST
@given(seeds)
def test_dirac_total_is_affine_in_phi(seed):
    geom, tw = _inputs("dirac", 1, seed)
    rng = np.random.default_rng(seed)
    other = tuple(JetMat.constant(rng.normal(size=(1, 1)) + 1j * rng.normal(size=(1, 1))) for _ in range(4))
    t0 = boundary_density("dirac", geom, replace(tw, phi=_zero(1))).total
    t1 = boundary_density("dirac", geom, tw).total
    t2 = boundary_density("dirac", geom, replace(tw, phi=other)).total
    t12 = boundary_density("dirac", geom, replace(tw, phi=tuple(a + b for a, b in zip(tw.phi, other)))).total
    assert t12 - t0 == pytest.approx((t1 - t0) + (t2 - t0), rel=1e-9, abs=1e-10)


@FAST
@given(seeds)
def test_dirac_total_depends_on_f_through_log_derivative(seed):
    geom, tw = _inputs("dirac", 1, seed)
    d1 = boundary_density("dirac", geom, tw)
    d2 = boundary_density("dirac", geom, replace(tw, f=tw.f * 2.0))
    assert d2.total == pytest.approx(d1.total, rel=1e-9, abs=1e-10)


@FAST
@given(seeds, st.integers(1, 2))
def test_dirac_twist_total(seed, k):
    """f = 1: only Tr_F of the normal twist survives, with sign -1 relative to the closed form."""
    geom, tw = _inputs("dirac", k, seed, f_jet="one")
    d = boundary_density("dirac", geom, tw)
    assert d.total == pytest.approx(-_trace_n(tw) * np.pi * OMEGA, rel=1e-9, abs=1e-10)
    assert d.total == pytest.approx(-paper_boundary_closed_form("dirac", geom, tw), rel=1e-9, abs=1e-10)


@FAST
@given(seeds)
def test_signature_total(seed):
    """The twist drops out; the conformal part is i Tr[id] / 4 times the closed form."""
    geom, tw = _inputs("signature", 1, seed)
    d = boundary_density("signature", geom, tw)
    closed = paper_boundary_closed_form("signature", geom, tw)
    assert closed == pytest.approx((np.pi * 1j / 2) * OMEGA * _conformal(tw.f))
    assert d.total == pytest.approx(1j * 4 * closed, rel=1e-9, abs=1e-10)


# symbolic oracle for the twist term -----------------------------------------


def _sympy_twist_cases(phi: complex) -> tuple:
    """Cases b and c for a flat collar, f = 1, k = 1, Phi(e_n) = phi, at xi' = (1, 0, 0)."""
    xn, z = sp.symbols("xn", real=True), sp.symbols("z")
    i2 = sp.eye(2)
    sx, sy, sz = sp.Matrix([[0, 1], [1, 0]]), sp.Matrix([[0, -sp.I], [sp.I, 0]]), sp.Matrix([[1, 0], [0, -1]])
    g = [sp.I * TensorProduct(sx, i2), sp.I * TensorProduct(sy, i2), sp.I * TensorProduct(sz, sx), sp.I * TensorProduct(sz, sy)]
    c = g[0] + xn * g[3]
    n2 = 1 + xn**2
    phi = sp.nsimplify(phi)

    def sm1():
        return sp.I * c / n2

    def sm2(s0):
        return c * s0 * c / n2**2

    def upper(e):
        e = sp.factor(e).subs(xn, z)
        if e == 0:
            return sp.Integer(0)
        keep = 0
        for t in sp.Add.make_args(sp.apart(e, z, extension=sp.I)):
            den = sp.denom(sp.together(t))
            if den.has(z) and sp.simplify(den.subs(z, sp.I)) == 0:
                keep += t
        return keep.subs(z, xn)

    def pi_plus(m):
        return m.applyfunc(upper)

    def line(e):
        e = sp.together(sp.expand(e)).subs(xn, z)
        return sp.simplify(2 * sp.pi * sp.I * sp.residue(e, z, sp.I))

    b = -sp.I * line((pi_plus(sm2(g[3] * phi)) * sp.diff(sm1(), xn)).trace())
    cc = -sp.I * line((pi_plus(sm1()) * sp.diff(sm2(-g[3] * sp.conjugate(phi)), xn)).trace())
    return complex(b), complex(cc)


def test_twist_cases_match_symbolic_oracle():
    phi = 0.5 + 0.25j
    b, c = _sympy_twist_cases(phi)
    assert b + c == pytest.approx(-np.pi * 2 * phi.real)
    tw = TwistData.from_constants(1, phi=[np.zeros((1, 1))] * 3 + [np.array([[phi]])])
    d = boundary_density("dirac", build_metric("collar", 0.0, 0.0), tw)
    assert d.per_case["b"] == pytest.approx(OMEGA * b, abs=1e-10)
    assert d.per_case["c"] == pytest.approx(OMEGA * c, abs=1e-10)


# closed forms --------------------------------------------------------------


def test_closed_form_examples():
    geom = build_metric("collar", 0.4, 0.0)
    tw = TwistData.from_constants(1, phi=[np.zeros((1, 1))] * 3 + [np.array([[0.3]])])
    assert paper_boundary_closed_form("dirac", geom, tw) == pytest.approx(0.6 * np.pi * OMEGA)
    assert paper_boundary_closed_form("signature", geom, TwistData.trivial(1)) == 0
    t = 0.35
    f = Jet.from_terms({(): 1.0, ("x4",): t})
    assert paper_boundary_closed_form("signature", geom, TwistData.trivial(1, f)) == pytest.approx(
        (np.pi * 1j / 2) * OMEGA * (-2 * t)
    )
    with pytest.raises(BadInput):
        paper_boundary_closed_form("laplace", geom, tw)

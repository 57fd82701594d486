from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncresidue.cli import Scenario, scenario_inputs
from ncresidue.clifford import TwistData, build_rep, clifford_twist
from ncresidue.errors import BadInput
from ncresidue.geometry import build_metric, normal_coordinate_coeffs, scalar_curvature
from ncresidue.interior import (
    endomorphism_E,
    engine_conformal_fit,
    interior_density,
    signature_closed_form_blocks,
    trE_closed_form,
)
from ncresidue.jetring import Jet

seeds = st.integers(min_value=0, max_value=2**32 - 1)
ops = st.sampled_from(["dirac", "signature"])
FAST = settings(max_examples=4)
DIM = {"dirac": 4, "signature": 16}


def _inputs(op, k, seed, **kw):
    inp = scenario_inputs(Scenario(op, mode="interior", fiber_dim=k, seed=seed, **kw))
    return build_metric("interior", quad_coeffs=normal_coordinate_coeffs(inp.riemann)), inp.twist


def _f(a: float, b: float) -> Jet:
    """f(x0) = 1, |grad f|^2 = a^2, Lap f = 2b."""
    return Jet.from_terms({(): 1.0, ("x1",): a, ("x2", "x2"): b})


# the endomorphism E ---------------------------------------------------------


@pytest.mark.parametrize("op", ["dirac", "signature"])
def test_flat_untwisted_endomorphism_vanishes(op):
    E = endomorphism_E(op, build_metric("interior"), TwistData.trivial(1))
    assert np.allclose(E, 0)


@given(seeds)
def test_flat_constant_twist_endomorphism(seed):
    rng = np.random.default_rng(seed)
    k = 2
    phi = [rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)) for _ in range(4)]
    tw = TwistData.from_constants(k, phi=phi)
    rep = build_rep(4, "spin", k)
    cphi = clifford_twist(rep, phi)
    cphis = clifford_twist(rep, [p.conj().T for p in phi])
    expected = cphis @ cphi
    for i in range(4):
        t = cphis @ rep.c(i) - rep.c(i) @ cphi
        expected = expected - 0.25 * t @ t
    assert np.allclose(endomorphism_E("dirac", build_metric("interior"), tw), expected, atol=1e-12)


@given(seeds, ops, st.integers(1, 2))
def test_curved_untwisted_trace(seed, op, k):
    geom, _ = _inputs(op, k, seed)
    E = endomorphism_E(op, geom, TwistData.trivial(k))
    assert np.trace(E) == pytest.approx(-scalar_curvature(geom) * DIM[op] * k / 4, abs=1e-10)


def test_collar_geometry_is_rejected():
    with pytest.raises(BadInput):
        endomorphism_E("dirac", build_metric("collar", 0.1, 0.0), TwistData.trivial(1))
    with pytest.raises(BadInput):
        endomorphism_E("laplace", build_metric("interior"), TwistData.trivial(1))


# transcribed closed forms ---------------------------------------------------


def test_closed_form_conformal_examples():
    geom = build_metric("interior")
    assert trE_closed_form("dirac", geom, TwistData.trivial(1)) == 0
    assert trE_closed_form("signature", geom, TwistData.trivial(1)) == 0
    a, b = 0.6, 0.35
    p, q = a**2, 2 * b
    tw = TwistData.trivial(1, _f(a, b))
    assert trE_closed_form("dirac", geom, tw) == pytest.approx(-4 * q - p)
    assert trE_closed_form("signature", geom, tw) == pytest.approx(-6 * q - 13 * p)


@given(seeds)
def test_signature_twist_weights_coincide(seed):
    geom, tw = _inputs("signature", 2, seed)
    a = signature_closed_form_blocks(geom, tw, 0.0, "n/16")
    b = signature_closed_form_blocks(geom, tw, 0.0, "1/4")
    assert a["twist"] == pytest.approx(b["twist"])


@given(seeds, st.integers(1, 3))
def test_dirac_trace_matches_closed_form_without_conformal_factor(seed, k):
    geom, tw = _inputs("dirac", k, seed, f_jet="one")
    trE = np.trace(endomorphism_E("dirac", geom, tw))
    assert trE == pytest.approx(trE_closed_form("dirac", geom, tw), rel=1e-9, abs=1e-9)


@given(seeds, st.integers(1, 2))
def test_signature_twist_block_has_flipped_square_term(seed, k):
    """The engine reproduces the signature twist block with the weighted square term negated."""
    geom, tw = _inputs("signature", k, seed, f_jet="one")
    s = scalar_curvature(geom)
    trE = np.trace(endomorphism_E("signature", geom, tw))
    flipped = signature_closed_form_blocks(geom, tw, s, quadratic_sign=-1.0)
    assert trE == pytest.approx(flipped["curvature"] + flipped["twist"], rel=1e-9, abs=1e-9)
    literal = signature_closed_form_blocks(geom, tw, s)
    assert abs(literal["twist"] - flipped["twist"]) > 1e-3


@given(seeds, ops, st.integers(1, 2))
def test_conformal_block_matches_fit(seed, op, k):
    geom, tw = _inputs(op, k, seed)
    full = np.trace(endomorphism_E(op, geom, tw))
    base = np.trace(endomorphism_E(op, geom, replace(tw, f=Jet.constant(1.0))))
    assert full - base == pytest.approx(engine_conformal_fit(op, geom, tw), rel=1e-9, abs=1e-9)


@given(seeds, ops)
def test_untwisted_conformal_block_matches_fit(seed, op):
    geom, tw = _inputs(op, 1, seed)
    tw = TwistData.trivial(1, tw.f)
    full = np.trace(endomorphism_E(op, geom, tw))
    base = -scalar_curvature(geom) * DIM[op] / 4
    assert full - base == pytest.approx(engine_conformal_fit(op, geom, tw), rel=1e-9, abs=1e-9)


# densities and the second path ---------------------------------------------


@pytest.mark.parametrize("op", ["dirac", "signature"])
def test_flat_untwisted_density(op):
    d = interior_density(op, build_metric("interior"), TwistData.trivial(1))
    assert abs(d.trE) < 1e-12
    assert abs(d.closed_form) < 1e-12
    assert abs(d.sigma4_path) < 1e-12


@pytest.mark.parametrize("op", ["dirac", "signature"])
def test_curved_untwisted_density(op):
    geom, _ = _inputs(op, 1, 21)
    d = interior_density(op, geom, TwistData.trivial(1))
    expected = 4 * np.pi**2 * (-d.s / 12) * DIM[op]
    assert d.closed_form == pytest.approx(expected, rel=1e-10)
    assert d.engine_density == pytest.approx(expected, rel=1e-10)
    assert d.sigma4_path == pytest.approx(expected, rel=1e-8)


@FAST
@given(seeds, ops)
def test_paths_agree(seed, op):
    geom, tw = _inputs(op, 1, seed)
    d = interior_density(op, geom, tw)
    assert d.sigma4_path == pytest.approx(d.engine_density, rel=1e-8, abs=1e-8)


def _random_so4(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(4, 4)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@FAST
@given(seeds, ops)
def test_sigma4_path_is_rotation_equivariant(seed, op):
    rng = np.random.default_rng(seed)
    riem = scenario_inputs(Scenario(op, seed=seed)).riemann
    k = 1
    mats = {name: [rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)) for _ in range(4)] for name in ("phi", "omega_f")}
    tw = TwistData.from_constants(k, phi=mats["phi"], omega_f=mats["omega_f"])
    R = _random_so4(rng)
    riem_r = np.einsum("ai,bj,ck,dl,ijkl->abcd", R, R, R, R, riem)

    def rotate(vals):
        return [sum(R[a, b] * vals[b] for b in range(4)) for a in range(4)]

    tw_r = TwistData.from_constants(k, phi=rotate(mats["phi"]), omega_f=rotate(mats["omega_f"]))
    d1 = interior_density(op, build_metric("interior", quad_coeffs=normal_coordinate_coeffs(riem)), tw)
    d2 = interior_density(op, build_metric("interior", quad_coeffs=normal_coordinate_coeffs(riem_r)), tw_r)
    assert d2.sigma4_path == pytest.approx(d1.sigma4_path, rel=1e-8, abs=1e-8)
    assert d2.engine_density == pytest.approx(d1.engine_density, rel=1e-9, abs=1e-9)


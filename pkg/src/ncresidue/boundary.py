"""Boundary term of the residue for the conformally perturbed operators.

In dimension four the boundary density is a sum over index tuples
``(r, l, k, j, alpha)`` with ``r - k - |alpha| + l - j - 1 = -4``:

    (-i)^(|alpha|+j+k+1) / (alpha! (j+k+1)!)
      * int_{|xi'|=1} int_R tr[ d_xn^j d_xi'^alpha d_xin^k pi+ L_r
                                * d_x'^alpha d_xin^(j+1) d_xn^k R_l ] dxi_n dsigma(xi')

where ``L = f D^-1`` and ``R = f^-1 (D*)^-1``.  The ``xi_n`` integral is
done by residues, the ``xi'`` integral by a Lebedev rule on the unit sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.integrate import lebedev_rule

from .clifford import TwistData, build_rep
from .errors import BadInput, QuadratureDegree, Unsupported
from .geometry import MetricJet
from .halfline import integrate_line, pi_plus
from .jetring import X_VARS, RationalXiN
from .symbols import (
    EvalPoint,
    SymbolExpansion,
    make_eval_point,
    multiply_by_function,
    operator_symbol,
    parametrix_order1,
)

MAX_SPHERE_DEGREE = 10
_LEBEDEV_ORDER = 11
CASE_NAMES = ("aI", "aII", "aIII", "b", "c")


# ---------------------------------------------------------------------------
# sphere quadrature


def unit_sphere_nodes(rotation=None) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (m, 3) and weights of a rule exact to degree 11 on the unit 2-sphere."""
    x, w = lebedev_rule(_LEBEDEV_ORDER)
    nodes = x.T
    if rotation is not None:
        rot = np.asarray(rotation, dtype=float)
        if rot.shape != (3, 3) or not np.allclose(rot @ rot.T, np.eye(3), atol=1e-12):
            raise BadInput("rotation must be an orthogonal 3x3 matrix")
        nodes = nodes @ rot.T
    return nodes, w


def sphere_measure() -> float:
    """Engine measure of the unit 2-sphere of tangential covectors."""
    return float(np.sum(unit_sphere_nodes()[1]))


def sphere_integrate(fn, degree_bound: int, rotation=None) -> complex:
    """Integral of ``fn`` over the unit sphere in R^3.

    Exact for polynomials of total degree at most ``degree_bound <= 10``.
    """
    if degree_bound > MAX_SPHERE_DEGREE:
        raise QuadratureDegree(f"degree bound {degree_bound} exceeds {MAX_SPHERE_DEGREE}")
    nodes, w = unit_sphere_nodes(rotation)
    total = 0j
    for node, wi in zip(nodes, w):
        total += wi * complex(fn(node))
    return total


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


# ---------------------------------------------------------------------------
# index tuples


@dataclass(frozen=True)
class CaseIndex:
    r: int
    l: int
    k: int
    j: int
    alpha: tuple = (0, 0, 0)

    def __post_init__(self):
        if self.r > -1 or self.l > -1 or self.k < 0 or self.j < 0 or any(a < 0 for a in self.alpha):
            raise BadInput("invalid index tuple")
        if len(self.alpha) != 3:
            raise BadInput("alpha runs over the three tangential directions")

    @property
    def abs_alpha(self) -> int:
        return sum(self.alpha)

    def satisfies(self, n: int = 4) -> bool:
        return self.r - self.k - self.abs_alpha + self.l - self.j - 1 == -n

    @property
    def prefactor(self) -> complex:
        fa = 1
        for a in self.alpha:
            fa *= factorial(a)
        return (-1j) ** (self.abs_alpha + self.j + self.k + 1) / (fa * factorial(self.j + self.k + 1))


def _group_name(idx: CaseIndex) -> str:
    if idx.r == -1 and idx.l == -1:
        if idx.abs_alpha == 1:
            return "aI"
        return "aII" if idx.j == 1 else "aIII"
    return "b" if idx.r == -2 else "c"


def enumerate_cases(n: int = 4) -> dict[str, list[CaseIndex]]:
    """All admissible tuples for ``n = 4``, grouped as aI, aII, aIII, b, c."""
    if n != 4:
        raise Unsupported("boundary terms are implemented for n = 4 only")
    groups: dict[str, list[CaseIndex]] = {name: [] for name in CASE_NAMES}
    for r in (-1, -2, -3):
        for l in (-1, -2, -3):
            for k in range(3):
                for j in range(3):
                    for a in range(3):
                        for alpha in _tangential(a):
                            idx = CaseIndex(r, l, k, j, alpha)
                            if idx.satisfies(n):
                                groups[_group_name(idx)].append(idx)
    return groups


def _tangential(total: int):
    for a1 in range(total + 1):
        for a2 in range(total + 1 - a1):
            yield (a1, a2, total - a1 - a2)


# ---------------------------------------------------------------------------
# case evaluation


def _derived(pt: EvalPoint, key: tuple, base, ops: tuple) -> RationalXiN:
    """``base`` differentiated along ``ops``, memoized per evaluation point.

    Several index tuples share the same projected factor and the same
    leading derivatives, so prefixes of ``ops`` are cached in ``pt.cache``.
    """
    ck = key + ops
    hit = pt.cache.get(ck)
    if hit is not None:
        return hit
    if not ops:
        val = base()
    else:
        prev = _derived(pt, key, base, ops[:-1])
        var = ops[-1]
        val = prev.derive_xi_n() if var == "xin" else prev.derive(var)
    pt.cache[ck] = val
    return val


def _left_ops(idx: CaseIndex) -> tuple:
    ops = ("x4",) * idx.j
    for i, a in enumerate(idx.alpha):
        ops += (f"xi{i + 1}",) * a
    return ops + ("xin",) * idx.k


def _right_ops(idx: CaseIndex) -> tuple:
    ops = ()
    for i, a in enumerate(idx.alpha):
        ops += (X_VARS[i],) * a
    return ops + ("xin",) * (idx.j + 1) + ("x4",) * idx.k


def case_integrand(idx: CaseIndex, left: SymbolExpansion, right: SymbolExpansion, pt: EvalPoint) -> complex:
    """The ``xi_n`` integral of the traced integrand at one tangential covector."""
    lt = _derived(pt, ("bdry-left", id(left), idx.r), lambda: pi_plus(left.term(idx.r)(pt)), _left_ops(idx))
    rt = _derived(pt, ("bdry-right", id(right), idx.l), lambda: right.term(idx.l)(pt), _right_ops(idx))
    tr = lt.trace_product(rt)
    return complex(integrate_line(tr).constant_part()[0, 0])


def _pair(op: str, geom: MetricJet, twist: TwistData):
    if op not in ("dirac", "signature"):
        raise BadInput(f"unknown operator {op!r}")
    if geom.mode != "collar":
        raise BadInput("boundary densities use the collar metric model")
    rep = build_rep(4, "spin" if op == "dirac" else "exterior", twist.fiber_dim)
    d = operator_symbol(op, geom, twist, rep)
    dstar = operator_symbol(op + "-adjoint", geom, twist, rep)
    left = multiply_by_function(twist.f, parametrix_order1(d, 2))
    right = multiply_by_function(twist.f_inv, parametrix_order1(dstar, 2))
    return left, right


def case_value(idx: CaseIndex, left: SymbolExpansion, right: SymbolExpansion, geom: MetricJet, rotation=None) -> complex:
    """Prefactor times the sphere and line integral of one index tuple."""
    if not idx.satisfies(4):
        raise BadInput("index tuple violates the degree constraint")

    def fn(node):
        return case_integrand(idx, left, right, make_eval_point(geom, node))

    return idx.prefactor * sphere_integrate(fn, MAX_SPHERE_DEGREE, rotation)


@dataclass
class BoundaryDensity:
    op: str
    per_case: dict
    total: complex
    sphere_measure: float
    inputs: dict = field(default_factory=dict)


def boundary_density(op: str, geom: MetricJet, twist: TwistData, rotation=None) -> BoundaryDensity:
    """All five case groups and their sum, evaluated node by node."""
    left, right = _pair(op, geom, twist)
    groups = enumerate_cases(4)
    nodes, w = unit_sphere_nodes(rotation)
    per_case = {name: 0j for name in CASE_NAMES}
    for node, wi in zip(nodes, w):
        pt = make_eval_point(geom, node)
        for name in CASE_NAMES:
            for idx in groups[name]:
                per_case[name] += wi * idx.prefactor * case_integrand(idx, left, right, pt)
    total = 0j
    for name in CASE_NAMES:
        total += per_case[name]
    return BoundaryDensity(
        op=op,
        per_case=per_case,
        total=total,
        sphere_measure=float(np.sum(w)),
        inputs={"h_prime0": geom.h_prime0, "fiber_dim": twist.fiber_dim},
    )


# ---------------------------------------------------------------------------
# transcribed closed forms


def _conformal_boundary(twist: TwistData) -> tuple[complex, complex]:
    f = twist.f
    finv = twist.f_inv
    f0, finv0 = f.value, finv.value
    df, dfinv = f.partial("x4"), finv.partial("x4")
    return f0 * dfinv, finv0 * df


def paper_boundary_closed_form(op: str, geom: MetricJet, twist: TwistData, omega3: float | None = None) -> complex:
    """The published boundary integrand at the base point."""
    om = sphere_measure() if omega3 is None else omega3
    a, b = _conformal_boundary(twist)
    conformal = (np.pi * 1j / 2) * om * (a - b)
    if op == "dirac":
        phi_n = twist.phi[3].constant_part()
        return complex(conformal + np.trace(phi_n.conj().T + phi_n) * np.pi * om)
    if op == "signature":
        return complex(conformal)
    raise BadInput(f"unknown operator {op!r}")


def paper_case_values(op: str, geom: MetricJet, twist: TwistData, l_factor: float = 1.0, omega3: float | None = None) -> dict:
    """Per-case transcriptions.

    The Dirac case b carries a free frame index; it is read as the normal
    direction.  The signature cases carry an unspecified factor ``l``,
    supplied through ``l_factor``.
    """
    om = sphere_measure() if omega3 is None else omega3
    hp = geom.h_prime0
    k = twist.fiber_dim
    a, b = _conformal_boundary(twist)
    sig_n = twist.sigma_f[3].constant_part()
    if op == "dirac":
        phi_n = twist.phi[3].constant_part()
        phis_n = phi_n.conj().T
        spin = 4
        return {
            "aI": 0j,
            "aII": -3 / 8 * np.pi * hp * k * om - np.pi * 1j / 2 * om * b,
            "aIII": 3 / 8 * np.pi * hp * k * om + np.pi * 1j / 2 * om * a,
            "b": (9 / 8 * hp * k - 0.25 * spin * np.trace(sig_n - phis_n)) * np.pi * om,
            "c": (-9 / 8 * hp * k + 0.25 * spin * np.trace(sig_n + phi_n)) * np.pi * om,
        }
    if op == "signature":
        lf = l_factor
        return {
            "aI": 0j,
            "aII": -1.5 * lf * np.pi * hp * om - np.pi * 1j / 2 * om * b,
            "aIII": 1.5 * lf * np.pi * hp * om + np.pi * 1j / 2 * om * a,
            "b": (4.5 * lf * hp - 4 * np.trace(sig_n)) * np.pi * om,
            "c": (-4.5 * lf * hp + 4 * np.trace(sig_n)) * np.pi * om,
        }
    raise BadInput(f"unknown operator {op!r}")

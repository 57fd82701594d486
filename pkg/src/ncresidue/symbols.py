"""Total symbols, composition and parametrices.

A symbol term is evaluated at an :class:`EvalPoint`: a base point ``x0``
(all ``x`` dependence is carried by jets in ``x1..x4``) and a node
``xi'_0`` of the tangential covector (jets in ``xi1..xi3`` describe
``xi' = xi'_0 + eta``).  The remaining conormal variable ``xi_4`` is kept
exactly, so every evaluation is a :class:`RationalXiN`.

Differential operators carry their symbols as exact polynomials
(``{exponent tuple: JetMat}``), which keeps the coefficients of composed
second order operators available for the Laplace normal form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import factorial
from typing import Callable, Sequence

import numpy as np

from .clifford import CliffordRep, TwistData
from .errors import BadInput, JetBudgetExceeded, NotElliptic
from .geometry import MetricJet, coframe_clifford, connection_jets
from .jetring import XI_VARS, X_VARS, Jet, JetMat, RationalXiN

N = 4
_XI_DERIV = ("xi1", "xi2", "xi3", None)  # None marks the exact xi_4 direction

Poly = dict  # {(b1, b2, b3, b4): JetMat}


@dataclass(eq=False)
class EvalPoint:
    """Evaluation context shared by all terms of a computation."""

    geom: MetricJet
    xi_prime: tuple
    xi: tuple
    a2: Jet
    cache: dict = field(default_factory=dict)


def make_eval_point(geom: MetricJet, xi_prime: Sequence[float]) -> EvalPoint:
    """Build the context at the tangential covector ``xi_prime``.

    The pole parameter is ``a2 = h(x4) |xi'|^2`` in the collar model, where
    ``|xi|^2_g = xi_4^2 + a2`` exactly, and ``a2 = |xi'|^2`` in the interior
    model, where the metric correction is handled by :func:`scalar_inverse`.
    """
    xp = tuple(float(v) for v in xi_prime)
    if len(xp) != 3:
        raise BadInput("xi' needs three components")
    if sum(v * v for v in xp) <= 0:
        raise BadInput("xi' must be nonzero")
    xi = tuple(Jet.variable(XI_VARS[j], at=xp[j]) for j in range(3))
    norm2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]
    a2 = geom.g_inv.entry(0, 0) * norm2 if geom.mode == "collar" else norm2
    return EvalPoint(geom, xp, xi, a2)


# ---------------------------------------------------------------------------
# polynomial symbols


def _monomial_jet(pt: EvalPoint, beta: tuple) -> Jet:
    out = Jet.constant(1.0)
    for j in range(3):
        for _ in range(beta[j]):
            out = out * pt.xi[j]
    return out


def poly_eval(poly: Poly, pt: EvalPoint, shape: tuple) -> RationalXiN:
    top = max((b[3] for b in poly), default=0)
    coeffs = [JetMat.zeros(*shape) for _ in range(top + 1)]
    for beta, c in poly.items():
        coeffs[beta[3]] = coeffs[beta[3]] + c * _monomial_jet(pt, beta)
    return RationalXiN.polynomial(coeffs, pt.a2)


def _poly_add(a: Poly, b: Poly, scale: complex = 1.0) -> Poly:
    out = dict(a)
    for k, v in b.items():
        out[k] = out[k] + v * scale if k in out else v * scale
    return out


def _poly_xi_derive(p: Poly, alpha: tuple) -> Poly:
    out = {}
    for beta, c in p.items():
        if any(b < a for b, a in zip(beta, alpha)):
            continue
        fac = 1
        for b, a in zip(beta, alpha):
            fac *= factorial(b) // factorial(b - a)
        out[tuple(b - a for b, a in zip(beta, alpha))] = c * float(fac)
    return out


def _poly_x_derive(p: Poly, alpha: tuple) -> Poly:
    out = {}
    for beta, c in p.items():
        for i, a in enumerate(alpha):
            for _ in range(a):
                c = c.derive(X_VARS[i])
        out[beta] = c
    return out


def _poly_mul(a: Poly, b: Poly) -> Poly:
    out = {}
    for ba, ca in a.items():
        for bb, cb in b.items():
            key = tuple(x + y for x, y in zip(ba, bb))
            prod_ = ca @ cb
            out[key] = out[key] + prod_ if key in out else prod_
    return out


# ---------------------------------------------------------------------------
# terms and expansions


@dataclass(frozen=True, eq=False)
class SymbolTerm:
    """A homogeneous term of degree ``degree``.

    ``evaluator`` maps an :class:`EvalPoint` to a :class:`RationalXiN`;
    ``poly`` is set for differential operator terms.
    """

    degree: int
    evaluator: Callable[[EvalPoint], RationalXiN]
    poly: Poly | None = None

    def __call__(self, pt: EvalPoint) -> RationalXiN:
        key = id(self)
        hit = pt.cache.get(key)
        if hit is not None and hit[0] is self:
            return hit[1]
        val = self.evaluator(pt)
        pt.cache[key] = (self, val)
        return val

    @staticmethod
    def from_poly(degree: int, poly: Poly, shape: tuple) -> "SymbolTerm":
        for beta in poly:
            if sum(beta) != degree:
                raise BadInput(f"monomial {beta} does not have degree {degree}")
        return SymbolTerm(degree, lambda pt: poly_eval(poly, pt, shape), dict(poly))


@dataclass(frozen=True, eq=False)
class SymbolExpansion:
    """Graded symbol ``sum_t terms[t]`` with ``terms[t].degree = order - t``."""

    order: int
    terms: tuple
    rep: CliffordRep
    twist: TwistData | None = None
    geom: MetricJet | None = None

    def __post_init__(self):
        for t, term in enumerate(self.terms):
            if term.degree != self.order - t:
                raise BadInput("symbol degrees must decrease by one without gaps")

    @property
    def depth(self) -> int:
        return len(self.terms)

    @property
    def dim(self) -> int:
        return self.rep.module_dim

    def term(self, degree: int) -> SymbolTerm:
        t = self.order - degree
        if not 0 <= t < len(self.terms):
            raise BadInput(f"degree {degree} not present (order {self.order}, depth {self.depth})")
        return self.terms[t]

    def is_polynomial(self) -> bool:
        return all(t.poly is not None for t in self.terms)


def _multi_indices(total: int):
    for alpha in product(range(total + 1), repeat=N):
        if sum(alpha) == total:
            yield alpha


def _coef(alpha: tuple) -> complex:
    den = 1
    for a in alpha:
        den *= factorial(a)
    return (-1j) ** sum(alpha) / den


def xi_derive(r: RationalXiN, alpha: tuple) -> RationalXiN:
    for i, a in enumerate(alpha):
        for _ in range(a):
            r = r.derive_xi_n() if _XI_DERIV[i] is None else r.derive(_XI_DERIV[i])
    return r


def x_derive(r: RationalXiN, alpha: tuple) -> RationalXiN:
    for i, a in enumerate(alpha):
        for _ in range(a):
            r = r.derive(X_VARS[i])
    return r


# ---------------------------------------------------------------------------
# operators


def _require_kind(kind: str, rep: CliffordRep):
    need = {"dirac": "spin", "dirac-adjoint": "spin", "signature": "exterior", "signature-adjoint": "exterior"}
    if kind not in need:
        raise BadInput(f"unknown operator kind {kind!r}")
    if rep.kind != need[kind]:
        raise BadInput(f"operator {kind!r} needs the {need[kind]} representation")


def operator_symbol(kind: str, geom: MetricJet, twist: TwistData, rep: CliffordRep | None = None) -> SymbolExpansion:
    """``sigma_1 = i c(xi)`` and ``sigma_0`` of the twisted operators."""
    if rep is None:
        rep_kind = "spin" if kind.startswith("dirac") else "exterior"
        from .clifford import build_rep

        rep = build_rep(4, rep_kind, twist.fiber_dim)
    _require_kind(kind, rep)
    if rep.fiber_dim != twist.fiber_dim:
        raise BadInput("representation and twist have different fiber dimensions")
    dim = rep.module_dim
    cdx = coframe_clifford(geom, rep)
    sigma1 = {tuple(int(i == j) for j in range(N)): cdx[i] * 1j for i in range(N)}
    conn = connection_jets(geom, rep)
    sigma0 = JetMat.zeros(dim, dim)
    if kind.startswith("dirac"):
        sign, ends = (1.0, twist.phi) if kind == "dirac" else (-1.0, twist.phi_star)
        for i in range(N):
            inner = conn[i] + rep.fiber_jet(twist.sigma_f[i]) + rep.fiber_jet(ends[i]) * sign
            sigma0 = sigma0 + cdx[i] @ inner
    else:
        chat = coframe_clifford(geom, rep, hatted=True)
        om = twist.omega_f if kind == "signature" else twist.omega_f_star
        for i in range(N):
            sigma0 = sigma0 + cdx[i] @ (conn[i] + rep.fiber_jet(twist.sigma_f[i]))
            sigma0 = sigma0 - (chat[i] @ rep.fiber_jet(om[i])) * 0.5
    shape = (dim, dim)
    terms = (SymbolTerm.from_poly(1, sigma1, shape), SymbolTerm.from_poly(0, {(0, 0, 0, 0): sigma0}, shape))
    return SymbolExpansion(1, terms, rep, twist, geom)


def multiplication_symbol(m: JetMat, rep: CliffordRep, twist=None, geom=None) -> SymbolExpansion:
    """Symbol of the order zero operator 'multiply by the endomorphism m'."""
    term = SymbolTerm.from_poly(0, {(0, 0, 0, 0): m}, m.shape)
    return SymbolExpansion(0, (term,), rep, twist, geom)


def multiply_by_function(f: Jet, s: SymbolExpansion) -> SymbolExpansion:
    """Symbol of ``f o S``; no derivative terms since ``f`` is independent of xi."""
    terms = []
    for t in s.terms:
        if t.poly is not None:
            terms.append(SymbolTerm(t.degree, _scaled(t, f), {k: v * f for k, v in t.poly.items()}))
        else:
            terms.append(SymbolTerm(t.degree, _scaled(t, f)))
    return SymbolExpansion(s.order, tuple(terms), s.rep, s.twist, s.geom)


def _scaled(t: SymbolTerm, f: Jet):
    return lambda pt: t(pt) * f


def compose(a: SymbolExpansion, b: SymbolExpansion, depth: int | None = None) -> SymbolExpansion:
    """Symbol of ``A o B`` through ``depth`` graded terms.

    ``sigma(AB) ~ sum_alpha (-i)^|alpha| / alpha! d_xi^alpha a d_x^alpha b``.
    Polynomial inputs give polynomial outputs with all terms.
    """
    if a.rep.module_dim != b.rep.module_dim:
        raise BadInput("symbols act on different modules")
    top = a.order + b.order
    if depth is None:
        depth = top + 1 if (a.is_polynomial() and b.is_polynomial()) else max(a.depth, b.depth)
    if depth > 4 and not (a.is_polynomial() and b.is_polynomial()):
        raise BadInput("composition depth is limited to 4")
    terms = []
    for t in range(depth):
        contribs = []
        for u in range(min(t, a.depth - 1) + 1):
            for v in range(min(t - u, b.depth - 1) + 1):
                k = t - u - v
                for alpha in _multi_indices(k):
                    contribs.append((u, v, alpha))
        if a.is_polynomial() and b.is_polynomial():
            poly: Poly = {}
            for u, v, alpha in contribs:
                pa = _poly_xi_derive(a.terms[u].poly, alpha)
                if not pa:
                    continue
                pb = _poly_x_derive(b.terms[v].poly, alpha)
                poly = _poly_add(poly, _poly_mul(pa, pb), _coef(alpha))
            terms.append(_poly_term(top - t, poly, (a.dim, b.dim)))
        else:
            terms.append(SymbolTerm(top - t, _composed(a, b, contribs)))
    return SymbolExpansion(top, tuple(terms), a.rep, a.twist or b.twist, a.geom or b.geom)


def _poly_term(degree: int, poly: Poly, shape: tuple) -> SymbolTerm:
    if degree < 0:
        if poly:
            raise BadInput("polynomial composition produced a negative degree term")
        return SymbolTerm(degree, lambda pt: RationalXiN.constant(JetMat.zeros(*shape), pt.a2), {})
    return SymbolTerm.from_poly(degree, poly, shape)


def _composed(a: SymbolExpansion, b: SymbolExpansion, contribs):
    def ev(pt: EvalPoint) -> RationalXiN:
        total = None
        for u, v, alpha in contribs:
            left = xi_derive(a.terms[u](pt), alpha)
            right = x_derive(b.terms[v](pt), alpha)
            piece = (left @ right) * _coef(alpha)
            total = piece if total is None else total + piece
        return total

    return ev


# ---------------------------------------------------------------------------
# parametrices


def scalar_inverse(s: RationalXiN, pt: EvalPoint) -> RationalXiN:
    """``1/s`` for a scalar polynomial ``s = xi_4^2 + a2 + delta``.

    ``delta`` must vanish at the expansion point, so the Neumann series
    ``sum (-delta)^k / D^(k+1)`` terminates within the jet order.
    """
    if s.shape != (1, 1) or s.pole_order != 0:
        raise NotElliptic("leading symbol square is not a scalar polynomial")
    d = RationalXiN.polynomial([JetMat.from_jet(pt.a2), JetMat.zeros(1, 1), JetMat.identity(1)], pt.a2)
    delta = s - d
    if np.abs(delta.numer[:, 0]).max() > 1e-10 * max(1.0, float(np.abs(s.numer).max())):
        raise NotElliptic("leading symbol square does not reduce to |xi|^2 at the base point")
    one = JetMat.identity(1).coeffs[None]
    inv_d = RationalXiN(one, pt.a2, 1)
    total = inv_d
    term = inv_d
    for _ in range(s.order):
        term = term.scalar_mul(-delta).scalar_mul(inv_d)
        if not term.numer.any():
            break
        total = total + term
    return total


def leading_inverse(lead: RationalXiN, pt: EvalPoint) -> RationalXiN:
    """Inverse of ``L`` when ``L @ L`` is a scalar multiple of the identity."""
    sq = lead @ lead
    dim = lead.rows
    diag = sq.numer[:, :, 0, 0]
    expected = diag[:, :, None, None] * np.eye(dim)[None, None]
    scale = max(1.0, float(np.abs(sq.numer).max()))
    if float(np.abs(sq.numer - expected).max()) > 1e-10 * scale:
        raise NotElliptic("the leading symbol does not square to a scalar")
    s = RationalXiN(diag[:, :, None, None], pt.a2, 0, sq.order)
    return lead.scalar_mul(scalar_inverse(s, pt))


def _laplace_inverse(lead: RationalXiN, pt: EvalPoint) -> RationalXiN:
    """Inverse of a leading symbol ``|xi|^2 Id``."""
    dim = lead.rows
    diag = lead.numer[:, :, 0, 0]
    expected = diag[:, :, None, None] * np.eye(dim)[None, None]
    scale = max(1.0, float(np.abs(lead.numer).max()))
    if float(np.abs(lead.numer - expected).max()) > 1e-10 * scale:
        raise NotElliptic("the leading symbol is not scalar")
    inv = scalar_inverse(RationalXiN(diag[:, :, None, None], pt.a2, 0, lead.order), pt)
    return inv.kron_identity(dim)


def _parametrix(s: SymbolExpansion, depth: int, side: str, leading) -> SymbolExpansion:
    if side not in ("left", "right"):
        raise BadInput("side must be 'left' or 'right'")
    m = s.order
    q_terms: list[SymbolTerm] = []

    q0 = SymbolTerm(-m, lambda pt: leading(s.terms[0](pt), pt).reduced())
    q_terms.append(q0)
    for t in range(1, depth):
        contribs = []
        for u in range(t):
            for l in range(min(t - u, s.depth - 1) + 1):
                k = t - u - l
                for alpha in _multi_indices(k):
                    contribs.append((u, l, alpha))
        q_terms.append(SymbolTerm(-m - t, _recursion(s, q_terms, q0, contribs, side)))
    return SymbolExpansion(-m, tuple(q_terms), s.rep, s.twist, s.geom)


def _recursion(s, q_terms, q0, contribs, side):
    def ev(pt: EvalPoint) -> RationalXiN:
        total = None
        for u, l, alpha in contribs:
            if side == "left":
                piece = xi_derive(q_terms[u](pt), alpha) @ x_derive(s.terms[l](pt), alpha)
            else:
                piece = xi_derive(s.terms[l](pt), alpha) @ x_derive(q_terms[u](pt), alpha)
            piece = piece * _coef(alpha)
            total = piece if total is None else total + piece
        lead = q0(pt)
        out = -(total @ lead) if side == "left" else -(lead @ total)
        return out.reduced()

    return ev


def parametrix_order1(s: SymbolExpansion, depth: int = 2, side: str = "left") -> SymbolExpansion:
    """Terms ``sigma_-1 .. sigma_{-depth}`` of the inverse of a first order symbol."""
    if s.order != 1:
        raise BadInput("parametrix_order1 needs a first order symbol")
    if not 1 <= depth <= 3:
        raise JetBudgetExceeded("first order parametrix depth is limited to 3")
    return _parametrix(s, depth, side, leading_inverse)


def parametrix_order2(p: SymbolExpansion, depth: int = 3, side: str = "left") -> SymbolExpansion:
    """Terms ``sigma_-2 .. sigma_{-1-depth}`` of the inverse of a Laplace type symbol."""
    if p.order != 2:
        raise BadInput("parametrix_order2 needs a second order symbol")
    if not 1 <= depth <= 3:
        raise JetBudgetExceeded("second order parametrix depth is limited to 3")
    return _parametrix(p, depth, side, _laplace_inverse)


def identity_symbol(rep: CliffordRep) -> SymbolExpansion:
    return multiplication_symbol(JetMat.identity(rep.module_dim), rep)


def laplace_coefficients(p: SymbolExpansion) -> tuple[list[JetMat], JetMat, dict]:
    """``(A, B, p2)`` of ``P = -(g^ij d_i d_j + A^i d_i + B)`` from its polynomial symbol.

    With ``d_j -> i xi_j`` the symbol is ``g^ij xi_i xi_j - i A^j xi_j - B``.
    """
    if p.order != 2 or not p.is_polynomial() or p.depth < 3:
        raise BadInput("need the full polynomial symbol of a second order operator")
    dim = p.dim
    p1 = p.terms[1].poly
    A = []
    for j in range(N):
        key = tuple(int(i == j) for i in range(N))
        A.append(p1[key] * 1j if key in p1 else JetMat.zeros(dim, dim))
    p0 = p.terms[2].poly
    B = -p0[(0, 0, 0, 0)] if (0, 0, 0, 0) in p0 else JetMat.zeros(dim, dim)
    return A, B, p.terms[0].poly


def subtract_expansions(a: SymbolExpansion, b: SymbolExpansion) -> SymbolExpansion:
    """``a - b`` for polynomial expansions with ``order(b) <= order(a)``."""
    if not (a.is_polynomial() and b.is_polynomial()):
        raise BadInput("subtraction is implemented for polynomial symbols")
    if b.order > a.order:
        raise BadInput("the subtrahend must not have higher order")
    shape = (a.dim, a.dim)
    terms = []
    low = min(a.order - a.depth + 1, b.order - b.depth + 1)
    for degree in range(a.order, low - 1, -1):
        poly = dict(a.term(degree).poly) if a.order - degree < a.depth else {}
        if b.order >= degree > b.order - b.depth:
            poly = _poly_add(poly, b.term(degree).poly, -1.0)
        terms.append(_poly_term(degree, poly, shape))
    return SymbolExpansion(a.order, tuple(terms), a.rep, a.twist, a.geom)

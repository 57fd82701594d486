"""Metric jets, Levi-Civita data, frames and the Laplace-type normal form.

Two local models are supported around the base point ``x0 = 0``:

``collar``
    ``g = h(x4)**-1 (dx1**2 + dx2**2 + dx3**2) + dx4**2`` with
    ``h(x4) = 1 + h'(0) x4 + h''(0) x4**2 / 2``.  The boundary metric is
    taken flat, which is what normal coordinates on the boundary give to
    the orders used by the boundary densities.

``interior``
    ``g_ij = delta_ij + sum_kl c_ijkl x_k x_l`` (first derivatives vanish
    at the base point).

Orthonormal frames are ``e~_a = sum_i E[a, i] d/dx_i`` with
``E = g**(-1/2)``; in the collar model this is ``e~_j = sqrt(h) d/dx_j``.
The Clifford image of the coordinate covector is then
``c(dx_i) = sum_a E[a, i] c(e~_a)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clifford import CliffordRep
from .errors import BadInput, InsufficientJet, ShapeError, Unsupported
from .jetring import X_VARS, Jet, JetMat

N = 4


def _h_jet(h1: float, h2: float) -> Jet:
    return Jet.from_terms({(): 1.0, ("x4",): h1, ("x4", "x4"): 0.5 * h2})


def _inv_sqrt_near_identity(g: JetMat) -> JetMat:
    """``g**(-1/2)`` for a jet matrix whose constant part is the identity."""
    n = g - JetMat.identity(g.rows)
    if not np.allclose(n.constant_part(), 0.0, atol=1e-14):
        raise BadInput("metric must be the identity at the base point")
    coeffs = [1.0, -0.5, 0.375]
    out = JetMat.identity(g.rows, g.order)
    power = JetMat.identity(g.rows, g.order)
    for k in range(1, g.order + 1):
        power = power @ n
        out = out + coeffs[k] * power
    return out


@dataclass(frozen=True, eq=False)
class MetricJet:
    """Second order jet of a Riemannian metric at the base point."""

    mode: str
    h_prime0: float = 0.0
    h_double_prime0: float | None = None
    quad_coeffs: np.ndarray | None = None
    g: JetMat = field(init=False)
    g_inv: JetMat = field(init=False)
    christoffel: tuple = field(init=False)
    frame: JetMat = field(init=False)

    def __post_init__(self):
        if self.mode == "collar":
            h = _h_jet(float(self.h_prime0), float(self.h_double_prime0 or 0.0))
            hinv = h.inverse()
            one = Jet.constant(1.0)
            zero = Jet.constant(0.0)
            diag = [hinv, hinv, hinv, one]
            g = JetMat.from_entries([[diag[i] if i == j else zero for j in range(N)] for i in range(N)])
            sq = h.sqrt()
            fr = [sq, sq, sq, one]
            frame = JetMat.from_entries([[fr[i] if i == j else zero for j in range(N)] for i in range(N)])
        elif self.mode == "interior":
            c = np.asarray(self.quad_coeffs if self.quad_coeffs is not None else np.zeros((N,) * 4), dtype=float)
            if c.shape != (N, N, N, N):
                raise BadInput("quadCoeffs must have shape (4, 4, 4, 4)")
            if not (np.allclose(c, c.transpose(1, 0, 2, 3)) and np.allclose(c, c.transpose(0, 1, 3, 2))):
                raise BadInput("quadCoeffs must be symmetric in (i, j) and in (k, l)")
            object.__setattr__(self, "quad_coeffs", c)
            entries = []
            for i in range(N):
                row = []
                for j in range(N):
                    terms = {(): 1.0 if i == j else 0.0}
                    for k in range(N):
                        for l in range(k, N):
                            val = c[i, j, k, l] if k == l else c[i, j, k, l] + c[i, j, l, k]
                            if val:
                                terms[(X_VARS[k], X_VARS[l])] = val
                    row.append(Jet.from_terms(terms))
                entries.append(row)
            g = JetMat.from_entries(entries)
            frame = _inv_sqrt_near_identity(g)
        else:
            raise BadInput(f"unknown metric mode {self.mode!r}")
        g_inv = g.inverse()
        dg = [g.derive(v) for v in X_VARS]
        gam = []
        for k in range(N):
            mat = [[None] * N for _ in range(N)]
            for i in range(N):
                for j in range(N):
                    acc = Jet.constant(0.0, 1)
                    for l in range(N):
                        t = dg[i].entry(j, l) + dg[j].entry(i, l) - dg[l].entry(i, j)
                        acc = acc + g_inv.entry(k, l) * t
                    mat[i][j] = acc * 0.5
            gam.append(JetMat.from_entries(mat))
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "g_inv", g_inv)
        object.__setattr__(self, "christoffel", tuple(gam))
        object.__setattr__(self, "frame", frame)

    def gamma(self, k: int, i: int, j: int) -> Jet:
        """Christoffel symbol ``Gamma^k_ij``."""
        return self.christoffel[k].entry(i, j)

    def contracted_gamma(self, k: int) -> Jet:
        """``Gamma^k = g^ij Gamma^k_ij``."""
        acc = Jet.constant(0.0, 1)
        for i in range(N):
            for j in range(N):
                acc = acc + self.g_inv.entry(i, j) * self.gamma(k, i, j)
        return acc

    def xi_norm_sq(self, xi: Sequence) -> Jet:
        """``|xi|^2_g = g^ij xi_i xi_j`` for jet-valued covector components."""
        acc = Jet.constant(0.0)
        for i in range(N):
            for j in range(N):
                acc = acc + self.g_inv.entry(i, j) * xi[i] * xi[j]
        return acc


def build_metric(mode: str, h_prime0: float = 0.0, h_double_prime0: float | None = None, quad_coeffs=None) -> MetricJet:
    return MetricJet(mode, h_prime0=h_prime0, h_double_prime0=h_double_prime0, quad_coeffs=quad_coeffs)


def scalar_curvature(m: MetricJet) -> float:
    """Scalar curvature at the base point, positive on round spheres."""
    if m.mode == "collar" and m.h_double_prime0 is None:
        raise InsufficientJet("collar curvature needs h''(0)")
    dgam = {v: [m.christoffel[l].derive(v) for l in range(N)] for v in X_VARS}
    gam0 = np.array([m.christoffel[l].constant_part() for l in range(N)])  # [l, i, j]
    s = 0.0
    ginv0 = m.g_inv.constant_part()
    for j in range(N):
        for k in range(N):
            ric = 0.0
            for i in range(N):
                # R^i_{ijk}
                r = dgam[X_VARS[i]][i].constant_part()[j, k] - dgam[X_VARS[j]][i].constant_part()[i, k]
                r += sum(gam0[i, i, mm] * gam0[mm, j, k] - gam0[i, j, mm] * gam0[mm, i, k] for mm in range(N))
                ric += r
            s += ginv0[j, k] * ric
    return float(np.real(s))


def coframe_clifford(m: MetricJet, rep: CliffordRep, hatted: bool = False) -> list[JetMat]:
    """``c(dx_i)`` (or the hatted action) as jet matrices on the full module."""
    gens = rep.gamma_hat if hatted else rep.gamma
    if hatted and rep.kind != "exterior":
        raise Unsupported("hatted Clifford action exists only on forms")
    out = []
    for i in range(N):
        acc = JetMat.zeros(rep.base_dim, rep.base_dim)
        for a in range(N):
            acc = acc + JetMat.from_jet(m.frame.entry(a, i), gens[a])
        out.append(rep.base_jet(acc))
    return out


def frame_connection(m: MetricJet) -> list[JetMat]:
    """``omega[i][a, b] = <nabla_{d_i} e~_a, e~_b>`` as 4x4 jet matrices."""
    dframe = [m.frame.derive(v) for v in X_VARS]
    out = []
    for i in range(N):
        entries = []
        for a in range(N):
            # components of nabla_i e~_a along d_k
            comps = []
            for k in range(N):
                acc = dframe[i].entry(a, k)
                for l in range(N):
                    acc = acc + m.frame.entry(a, l) * m.gamma(k, i, l)
                comps.append(acc)
            row = []
            for b in range(N):
                acc = Jet.constant(0.0, 1)
                for k in range(N):
                    for mm in range(N):
                        acc = acc + comps[k] * m.g.entry(k, mm) * m.frame.entry(b, mm)
                row.append(acc)
            entries.append(row)
        out.append(JetMat.from_entries(entries))
    return out


def connection_jets(m: MetricJet, rep: CliffordRep) -> list[JetMat]:
    """Coordinate components of the spin or form connection on the module.

    spin:      ``sigma_i = 1/4 sum_ab omega_i[a, b] c_a c_b``
    exterior:  ``sigma_i = 1/4 sum_ab omega_i[a, b] (c_a c_b - chat_a chat_b)``
    """
    om = frame_connection(m)
    out = []
    for i in range(N):
        acc = JetMat.zeros(rep.base_dim, rep.base_dim)
        for a in range(N):
            for b in range(N):
                if a == b:
                    continue
                gen = rep.gamma[a] @ rep.gamma[b]
                if rep.kind == "exterior":
                    gen = gen - rep.gamma_hat[a] @ rep.gamma_hat[b]
                acc = acc + JetMat.from_jet(om[i].entry(a, b), gen)
        out.append(rep.base_jet(acc * 0.25))
    return out


def frame_xi_derivative(m: MetricJet, rep: CliffordRep, xi_prime: Sequence[float]) -> JetMat:
    """The jet matrix ``c(xi')(x) = sum_{j<4} xi_j c(dx_j)(x)`` in the collar.

    Its ``x4`` derivative at the base point is ``h'(0)/2 * c(xi')``.
    """
    if m.mode != "collar":
        raise Unsupported("frame_xi_derivative is defined for the collar model")
    if len(xi_prime) != 3:
        raise ShapeError("xi' must have three components")
    cdx = coframe_clifford(m, rep)
    return sum((cdx[j] * float(xi_prime[j]) for j in range(1, 3)), cdx[0] * float(xi_prime[0]))


@dataclass(frozen=True, eq=False)
class LaplaceNormalForm:
    """``P = -(g^ij (nabla_i nabla_j - Gamma^k_ij nabla_k) + E)`` with ``nabla_i = d_i + omega_i``."""

    omega: tuple
    E: np.ndarray
    g_inv: JetMat
    A: tuple
    B: JetMat


def laplace_decompose(m: MetricJet, A: Sequence[JetMat], B: JetMat) -> LaplaceNormalForm:
    """Connection and endomorphism of ``P = -(g^ij d_i d_j + A^i d_i + B)``."""
    if len(A) != N:
        raise ShapeError("A needs four components")
    dim = B.rows
    for a in A:
        if a.shape != (dim, dim):
            raise ShapeError("A and B must act on the same module")
    gam_up = [m.contracted_gamma(j) for j in range(N)]
    ident = np.eye(dim)
    shifted = [A[j] + JetMat.from_jet(gam_up[j], ident) for j in range(N)]
    omega = []
    for i in range(N):
        acc = JetMat.zeros(dim, dim)
        for j in range(N):
            acc = acc + shifted[j] * m.g.entry(i, j)
        omega.append(acc * 0.5)
    domega = {v: [w.derive(v) for w in omega] for v in X_VARS}
    ginv0 = m.g_inv.constant_part()
    gam0 = np.array([m.christoffel[k].constant_part() for k in range(N)])
    om0 = [w.constant_part() for w in omega]
    E = B.constant_part().astype(complex)
    for i in range(N):
        for j in range(N):
            if ginv0[i, j] == 0:
                continue
            t = domega[X_VARS[i]][j].constant_part() + om0[i] @ om0[j]
            t = t - sum(om0[k] * gam0[k, i, j] for k in range(N))
            E = E - ginv0[i, j] * t
    return LaplaceNormalForm(tuple(omega), E, m.g_inv, tuple(A), B)


def reassemble(m: MetricJet, lnf: LaplaceNormalForm) -> tuple[list[JetMat], np.ndarray]:
    """Recover ``(A, B(x0))`` from ``(omega, E)``; inverse of :func:`laplace_decompose`."""
    dim = lnf.E.shape[0]
    ident = np.eye(dim)
    A = []
    for j in range(N):
        acc = JetMat.from_jet(m.contracted_gamma(j), ident) * (-1.0)
        for i in range(N):
            acc = acc + lnf.omega[i] * (m.g_inv.entry(i, j) * 2.0)
        A.append(acc)
    ginv0 = m.g_inv.constant_part()
    gam0 = np.array([m.christoffel[k].constant_part() for k in range(N)])
    om0 = [w.constant_part() for w in lnf.omega]
    B = lnf.E.copy()
    for i in range(N):
        for j in range(N):
            if ginv0[i, j] == 0:
                continue
            t = lnf.omega[j].derive(X_VARS[i]).constant_part() + om0[i] @ om0[j]
            t = t - sum(om0[k] * gam0[k, i, j] for k in range(N))
            B = B + ginv0[i, j] * t
    return A, B


def normal_coordinate_coeffs(riemann: np.ndarray) -> np.ndarray:
    """Quadratic metric coefficients ``g_ij = delta_ij - 1/3 R_ikjl x^k x^l``.

    ``riemann[i, j, k, l]`` is a covariant curvature tensor normalized so
    that ``R_abab`` is the sectional curvature of the ``(a, b)`` plane (so the
    scalar curvature is ``sum_ab R_abab``).  The result is symmetrized in
    ``(k, l)``.
    """
    r = np.asarray(riemann, dtype=float)
    # out[i, j, k, l] = R[i, k, j, l] and R[i, l, j, k]
    return -(r.transpose(0, 2, 1, 3) + r.transpose(0, 2, 3, 1)) / 6.0


def random_curvature_tensor(rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    """An algebraic curvature tensor built from random symmetric forms.

    Uses Kulkarni-Nomizu squares ``(S o S) / 2``, which carry every
    algebraic symmetry including the first Bianchi identity.
    """
    r = np.zeros((N,) * 4)
    for _ in range(3):
        a = rng.uniform(-1, 1, (N, N))
        s = scale * (a + a.T) / 2
        r += (
            np.einsum("ik,jl->ijkl", s, s)
            + np.einsum("jl,ik->ijkl", s, s)
            - np.einsum("il,jk->ijkl", s, s)
            - np.einsum("jk,il->ijkl", s, s)
        ) / 2
    return r

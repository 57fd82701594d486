"""Half-line projections and real-line integration in the conormal variable.

All rational functions handled here have poles only at ``xi_n = +ia`` and
``xi_n = -ia`` with ``a = sqrt(a2)`` a jet whose constant part is positive.
The projection onto the upper-pole component is computed from the Laurent
expansion at ``+ia``:

    N(ia + t) / (t**m (2ia + t)**m) = sum_q c_q t**(-q) + regular,

so that ``pi_plus(N / D**m) = sum_q c_q / (xi_n - ia)**q``, which is brought
back over the common denominator through ``1/(xi_n - ia) = (xi_n + ia)/D``.
Everything is done with jet arithmetic, so derivatives of the projection in
``x`` and ``xi'`` stay exact.
"""

from __future__ import annotations

from math import comb

import numpy as np

from .errors import DivergentIntegral, NotProper
from .jetring import NMON, Jet, JetMat, RationalXiN, _d_power, _jprod, _pmul, _trim


def _powers(base: Jet, count: int) -> list[np.ndarray]:
    out = [Jet.constant(1.0, base.order)]
    for _ in range(1, count):
        out.append(out[-1] * base)
    return [p.coeffs for p in out]


def _scal(jet_coeffs: np.ndarray, arr: np.ndarray, order: int) -> np.ndarray:
    return _jprod(jet_coeffs[:, None, None], arr, order, "mul")


def _require_proper(r: RationalXiN):
    if not r.is_proper():
        raise NotProper("the rational function has a polynomial part")


def upper_laurent(r: RationalXiN) -> list[np.ndarray]:
    """Principal-part coefficients ``c_1..c_m`` at the pole ``+ia``.

    ``c_q`` multiplies ``(xi_n - ia)**(-q)``; each entry has shape
    (36, rows, cols).
    """
    m, order = r.pole_order, r.order
    if m == 0:
        return []
    ia = 1j * r.pole_param_sq.sqrt()
    numer = r.numer
    t_count = numer.shape[0]
    pw = _powers(ia, max(t_count, 1))
    # Taylor coefficients of N at ia, only the first m are needed
    shifted = []
    for s in range(m):
        acc = np.zeros(numer.shape[1:], dtype=complex)
        for p in range(s, t_count):
            if numer[p].any():
                acc += comb(p, s) * _scal(pw[p - s], numer[p], order)
        shifted.append(acc)
    # series of (2ia + t)**(-m)
    two_ia_inv = (2 * ia).inverse()
    base = two_ia_inv ** m
    weights = []
    for k in range(m):
        coeff = _binom_neg(m, k)
        weights.append((base * (two_ia_inv ** k) * coeff).coeffs)
    laurent = []
    for j in range(m):
        acc = np.zeros(numer.shape[1:], dtype=complex)
        for s in range(j + 1):
            acc += _scal(weights[j - s], shifted[s], order)
        laurent.append(acc)
    # coefficient of t**(j - m) is laurent[j]; c_q = laurent[m - q]
    return [laurent[m - q] for q in range(1, m + 1)]


def _binom_neg(m: int, k: int) -> float:
    """Generalized binomial coefficient C(-m, k)."""
    return (-1) ** k * comb(m + k - 1, k)


def pi_plus(r: RationalXiN) -> RationalXiN:
    """Component of a proper rational with poles only at ``+ia``."""
    _require_proper(r)
    m, order = r.pole_order, r.order
    if m == 0:
        return RationalXiN(np.zeros((1,) + r.numer.shape[1:]), r.pole_param_sq, 0, order)
    cs = upper_laurent(r)
    ia = 1j * r.pole_param_sq.sqrt()
    # (xi_n + ia) as a scalar polynomial array
    lin = np.zeros((2, NMON, 1, 1), dtype=complex)
    lin[0, :, 0, 0] = ia.coeffs
    lin[1, 0, 0, 0] = 1.0
    total = np.zeros((2 * m, NMON) + r.shape, dtype=complex)
    lin_pow = np.zeros((1, NMON, 1, 1), dtype=complex)
    lin_pow[0, 0, 0, 0] = 1.0
    for q in range(1, m + 1):
        lin_pow = _pmul(lin_pow, lin, order, "mul")
        factor = _pmul(lin_pow, _d_power(r.pole_param_sq, m - q, order), order, "mul")
        term = _pmul(factor, cs[q - 1][None], order, "mul")
        total[: term.shape[0]] += term
    return RationalXiN(_trim(total), r.pole_param_sq, m, order)


def pi_minus(r: RationalXiN) -> RationalXiN:
    """Complementary projection ``id - pi_plus`` (poles only at ``-ia``)."""
    return r - pi_plus(r)


def residue_upper(r: RationalXiN) -> JetMat:
    """Residue of ``r`` at ``xi_n = +ia``."""
    if r.pole_order == 0:
        return JetMat(np.zeros(r.numer.shape[1:]), r.order)
    return JetMat(upper_laurent(r)[0], r.order)


def pi_prime(r: RationalXiN) -> JetMat:
    """``(1/2pi) * 2pi i * (sum of upper half-plane residues)``."""
    _require_proper(r)
    return residue_upper(r) * 1j


def integrate_line(r: RationalXiN) -> JetMat:
    """Integral over the real ``xi_n`` axis by the residue theorem."""
    _require_integrable(r)
    return residue_upper(r) * (2j * np.pi)


def _require_integrable(r: RationalXiN, rtol: float = 1e-11):
    if r.pole_order == 0:
        if r.numer.any():
            raise DivergentIntegral("polynomial integrand")
        return
    limit = 2 * r.pole_order - 2
    if r.degree <= limit:
        return
    scale = max(1.0, float(np.abs(r.numer).max()))
    top = r.numer[limit + 1 :]
    if float(np.abs(top).max()) > rtol * scale:
        raise DivergentIntegral(
            f"numerator degree {r.degree} exceeds {limit} for pole order {r.pole_order}"
        )

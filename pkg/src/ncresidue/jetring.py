"""Truncated Taylor jets and rational functions of the conormal variable.

Every symbol the engine manipulates depends on the base point ``x`` and on
the tangential covector ``xi'`` only through a second order Taylor jet, and
on the conormal variable ``xi_n`` through a rational function whose
denominator is a power of ``xi_n**2 + a**2``.  This module supplies both
layers:

* :class:`Jet` and :class:`JetMat` are scalar and matrix valued elements of
  the ring ``C[x1..x4, xi1..xi3] / (degree > 2)``.  Each value remembers the
  order up to which its coefficients are trustworthy; differentiation lowers
  that order by one and differentiating an order zero value raises
  :class:`~ncresidue.errors.JetBudgetExceeded`.
* :class:`RationalXiN` is ``N(xi_n) / (xi_n**2 + a2)**m`` with matrix jet
  coefficients.  The split into a polynomial part and a proper part is
  available through :attr:`RationalXiN.poly` and :attr:`RationalXiN.num`.

Storage is a dense numpy array whose jet axis enumerates the 36 monomials of
total degree at most two in the seven variables; products run over the 120
monomial pairs whose degrees add up to at most the retained order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import (
    BadInput,
    IncompatiblePoles,
    JetBudgetExceeded,
    NonInvertibleJet,
    PoleEvaluation,
    PoleOrderExceeded,
    ShapeError,
)

VARIABLES = ("x1", "x2", "x3", "x4", "xi1", "xi2", "xi3")
X_VARS = VARIABLES[:4]
XI_VARS = VARIABLES[4:]
MAX_ORDER = 2
MAX_POLE_ORDER = 6


def _build_monomials():
    n = len(VARIABLES)
    mons = [(0,) * n]
    for i in range(n):
        e = [0] * n
        e[i] = 1
        mons.append(tuple(e))
    for i in range(n):
        for j in range(i, n):
            e = [0] * n
            e[i] += 1
            e[j] += 1
            mons.append(tuple(e))
    return tuple(mons)


MONOMIALS = _build_monomials()
NMON = len(MONOMIALS)
_INDEX = {m: i for i, m in enumerate(MONOMIALS)}
_DEGREE = np.array([sum(m) for m in MONOMIALS])
_VAR_INDEX = {v: i for i, v in enumerate(VARIABLES)}


@lru_cache(maxsize=None)
def _pairs(order: int):
    """Monomial pairs (p, q) with deg p + deg q <= order, grouped by product."""
    rows = []
    for p, mp in enumerate(MONOMIALS):
        for q, mq in enumerate(MONOMIALS):
            if sum(mp) + sum(mq) <= order:
                r = _INDEX[tuple(a + b for a, b in zip(mp, mq))]
                rows.append((r, p, q))
    rows.sort()
    r_arr = np.array([r for r, _, _ in rows])
    p_arr = np.array([p for _, p, _ in rows])
    q_arr = np.array([q for _, _, q in rows])
    targets, starts = np.unique(r_arr, return_index=True)
    return p_arr, q_arr, targets, starts


@lru_cache(maxsize=None)
def _derivative_table(var: str):
    k = _VAR_INDEX[var]
    src, dst, fac = [], [], []
    for i, m in enumerate(MONOMIALS):
        if m[k] > 0:
            lowered = list(m)
            lowered[k] -= 1
            src.append(i)
            dst.append(_INDEX[tuple(lowered)])
            fac.append(float(m[k]))
    return np.array(src), np.array(dst), np.array(fac)


def _truncate(c: np.ndarray, order: int, axis: int) -> np.ndarray:
    if order >= MAX_ORDER:
        return c
    c = np.array(c, dtype=complex, copy=True)
    idx = [slice(None)] * c.ndim
    idx[axis] = _DEGREE > order
    c[tuple(idx)] = 0.0
    return c


@lru_cache(maxsize=None)
def _cross_table() -> np.ndarray:
    """0/1 matrix sending products of linear monomials to quadratic ones."""
    nv = len(VARIABLES)
    s = np.zeros((NMON - 1 - nv, nv * nv))
    for i in range(nv):
        for j in range(nv):
            e = [0] * nv
            e[i] += 1
            e[j] += 1
            s[_INDEX[tuple(e)] - 1 - nv, i * nv + j] = 1.0
    return s


def _jprod(a: np.ndarray, b: np.ndarray, order: int, kind: str = "matmul") -> np.ndarray:
    """Truncated product of jet arrays whose jet axis sits at position -3.

    ``kind`` is ``matmul`` (matrix product of the trailing axes), ``mul``
    (broadcast elementwise product) or ``trace`` (trace of the matrix
    product, result has the jet axis last).  The product is assembled
    degree by degree: constant, linear and quadratic monomials.
    """
    if kind == "matmul":
        op = np.matmul
    elif kind == "mul":
        op = np.multiply
    elif kind == "trace":

        def op(x, y):
            return np.einsum("...ij,...ji->...", x, y)

    else:  # pragma: no cover - internal misuse
        raise ValueError(kind)
    nv = len(VARIABLES)
    lin = slice(1, 1 + nv)
    quad = slice(1 + nv, NMON)
    a0, b0 = a[..., :1, :, :], b[..., :1, :, :]
    c0 = op(a0, b0)
    axis = -1 if kind == "trace" else -3
    shape = list(c0.shape)
    shape[axis] = NMON
    out = np.zeros(shape, dtype=complex)
    if kind == "trace":
        out[..., :1] = c0
    else:
        out[..., :1, :, :] = c0
    if order < 1:
        return out
    a1, b1 = a[..., lin, :, :], b[..., lin, :, :]
    c1 = op(a0, b1) + op(a1, b0)
    if kind == "trace":
        out[..., lin] = c1
    else:
        out[..., lin, :, :] = c1
    if order < 2:
        return out
    cross = op(a1[..., :, None, :, :], b1[..., None, :, :, :])
    c2 = op(a0, b[..., quad, :, :]) + op(a[..., quad, :, :], b0)
    if kind == "trace":
        out[..., quad] = c2 + cross.reshape(cross.shape[:-2] + (nv * nv,)) @ _cross_table().T
    else:
        r, c = cross.shape[-2:]
        flat = cross.reshape(cross.shape[:-4] + (nv * nv, r * c))
        out[..., quad, :, :] = c2 + (_cross_table() @ flat).reshape(flat.shape[:-2] + (NMON - 1 - nv, r, c))
    return out


def _jprod_reference(a: np.ndarray, b: np.ndarray, order: int, kind: str = "matmul") -> np.ndarray:
    """Pair-enumeration version of :func:`_jprod`, kept as a test oracle."""
    p, q, targets, starts = _pairs(order)
    ap = a[..., p, :, :]
    bq = b[..., q, :, :]
    if kind == "matmul":
        prod = ap @ bq
    elif kind == "mul":
        prod = ap * bq
    elif kind == "trace":
        prod = np.einsum("...ij,...ji->...", ap, bq)
        red = np.add.reduceat(prod, starts, axis=-1)
        out = np.zeros(prod.shape[:-1] + (NMON,), dtype=complex)
        out[..., targets] = red
        return out
    else:  # pragma: no cover - internal misuse
        raise ValueError(kind)
    red = np.add.reduceat(prod, starts, axis=-3)
    out = np.zeros(prod.shape[:-3] + (NMON,) + prod.shape[-2:], dtype=complex)
    out[..., targets, :, :] = red
    return out


def _jderive(c: np.ndarray, var: str, order: int, axis: int) -> np.ndarray:
    if var not in _VAR_INDEX:
        raise BadInput(f"unknown jet variable {var!r}")
    if order <= 0:
        raise JetBudgetExceeded(f"cannot differentiate in {var}: jet order exhausted")
    src, dst, fac = _derivative_table(var)
    out = np.zeros_like(c)
    moved = np.moveaxis(c, axis, 0)
    outm = np.moveaxis(out, axis, 0)
    shape = (-1,) + (1,) * (moved.ndim - 1)
    outm[dst] = moved[src] * fac.reshape(shape)
    return out


def _series(c0: complex, derivs: Sequence[complex], u: "Jet") -> "Jet":
    """Evaluate sum_k derivs[k] * u**k for a nilpotent jet ``u``."""
    result = Jet.constant(derivs[0], order=u.order)
    power = Jet.constant(1.0, order=u.order)
    for k in range(1, u.order + 1):
        power = power * u
        result = result + derivs[k] * power
    return result


Scalar = Union[int, float, complex, np.number]


@dataclass(frozen=True, eq=False)
class Jet:
    """Scalar element of the truncated jet ring.

    ``coeffs[i]`` is the Taylor coefficient of ``MONOMIALS[i]``; ``order``
    is the highest total degree whose coefficients are exact.
    """

    coeffs: np.ndarray
    order: int = MAX_ORDER

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (NMON,):
            raise ShapeError(f"jet coefficients must have shape ({NMON},), got {c.shape}")
        if not 0 <= self.order <= MAX_ORDER:
            raise BadInput(f"jet order {self.order} outside 0..{MAX_ORDER}")
        object.__setattr__(self, "coeffs", _truncate(c, self.order, 0))

    # construction -----------------------------------------------------
    @staticmethod
    def constant(value: Scalar, order: int = MAX_ORDER) -> "Jet":
        c = np.zeros(NMON, dtype=complex)
        c[0] = value
        return Jet(c, order)

    @staticmethod
    def variable(name: str, at: Scalar = 0.0, order: int = MAX_ORDER) -> "Jet":
        """The coordinate function ``name`` expanded around the value ``at``."""
        c = np.zeros(NMON, dtype=complex)
        c[0] = at
        e = [0] * len(VARIABLES)
        e[_VAR_INDEX[name]] = 1
        c[_INDEX[tuple(e)]] = 1.0
        return Jet(c, order)

    @staticmethod
    def from_terms(terms: Mapping[tuple, Scalar], order: int = MAX_ORDER) -> "Jet":
        """Build from ``{("x1", "x2"): 3.0, (): 1.0}`` style monomial keys."""
        c = np.zeros(NMON, dtype=complex)
        for names, value in terms.items():
            e = [0] * len(VARIABLES)
            for name in names:
                e[_VAR_INDEX[name]] += 1
            key = tuple(e)
            if key not in _INDEX:
                raise BadInput(f"monomial {names} exceeds jet degree {MAX_ORDER}")
            c[_INDEX[key]] += value
        return Jet(c, order)

    # inspection -------------------------------------------------------
    @property
    def value(self) -> complex:
        return complex(self.coeffs[0])

    @property
    def vars(self) -> tuple:
        """Variables that occur with a nonzero coefficient."""
        used = set()
        for i in np.nonzero(self.coeffs)[0]:
            for k, e in enumerate(MONOMIALS[i]):
                if e:
                    used.add(VARIABLES[k])
        return tuple(v for v in VARIABLES if v in used)

    def coefficient(self, *names: str) -> complex:
        e = [0] * len(VARIABLES)
        for name in names:
            e[_VAR_INDEX[name]] += 1
        return complex(self.coeffs[_INDEX[tuple(e)]])

    def partial(self, *names: str) -> complex:
        """Partial derivative at the expansion point, e.g. ``partial("x1", "x1")``."""
        e = [0] * len(VARIABLES)
        for name in names:
            e[_VAR_INDEX[name]] += 1
        return float(np.prod([math.factorial(k) for k in e])) * complex(self.coeffs[_INDEX[tuple(e)]])

    def allclose(self, other: "Jet", atol: float = 1e-12) -> bool:
        n = min(self.order, other.order)
        mask = _DEGREE <= n
        return bool(np.allclose(self.coeffs[mask], other.coeffs[mask], atol=atol, rtol=0))

    # arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        if np.isscalar(other):
            return Jet.constant(other, MAX_ORDER)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return Jet(self.coeffs + other.coeffs, min(self.order, other.order))

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.order)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return Jet(self.coeffs - other.coeffs, min(self.order, other.order))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            order = min(self.order, other.order)
            c = _jprod(self.coeffs[:, None, None], other.coeffs[:, None, None], order, "mul")
            return Jet(c[:, 0, 0], order)
        if np.isscalar(other):
            return Jet(self.coeffs * other, self.order)
        return NotImplemented

    def __rmul__(self, other):
        if np.isscalar(other):
            return Jet(self.coeffs * other, self.order)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.inverse()
        if np.isscalar(other):
            return Jet(self.coeffs / other, self.order)
        return NotImplemented

    def __rtruediv__(self, other):
        if np.isscalar(other):
            return other * self.inverse()
        return NotImplemented

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)):
            return NotImplemented
        if n < 0:
            return self.inverse() ** (-n)
        result = Jet.constant(1.0, self.order)
        for _ in range(n):
            result = result * self
        return result

    def inverse(self) -> "Jet":
        c0 = self.value
        if c0 == 0:
            raise NonInvertibleJet("jet with zero constant term has no inverse")
        u = self - c0
        derivs = [(-1) ** k / c0 ** (k + 1) for k in range(MAX_ORDER + 1)]
        return _series(c0, derivs, u)

    def sqrt(self) -> "Jet":
        """Principal square root; the constant part must be nonzero."""
        c0 = self.value
        if c0 == 0:
            raise NonInvertibleJet("square root of a jet with zero constant term")
        s = np.sqrt(complex(c0))
        derivs = [s, 0.5 / s, -0.125 / (s * c0)]
        return _series(c0, derivs, self - c0)

    def derive(self, var: str) -> "Jet":
        return Jet(_jderive(self.coeffs, var, self.order, 0), self.order - 1)

    def truncated(self, order: int) -> "Jet":
        return Jet(self.coeffs, min(order, self.order))

    def conj(self) -> "Jet":
        """Complex conjugate (all jet variables are real)."""
        return Jet(np.conj(self.coeffs), self.order)

    def __repr__(self) -> str:
        parts = []
        for i in np.nonzero(np.abs(self.coeffs) > 0)[0]:
            mon = "*".join(
                f"{VARIABLES[k]}^{e}" if e > 1 else VARIABLES[k]
                for k, e in enumerate(MONOMIALS[i])
                if e
            )
            parts.append(f"({self.coeffs[i]:.6g}){('*' + mon) if mon else ''}")
        return f"Jet[{self.order}](" + (" + ".join(parts) or "0") + ")"


@dataclass(frozen=True, eq=False)
class JetMat:
    """Matrix whose entries are jets; ``coeffs`` has shape (36, rows, cols)."""

    coeffs: np.ndarray
    order: int = MAX_ORDER

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[0] != NMON:
            raise ShapeError(f"JetMat coefficients must have shape ({NMON}, r, c), got {c.shape}")
        if not 0 <= self.order <= MAX_ORDER:
            raise BadInput(f"jet order {self.order} outside 0..{MAX_ORDER}")
        object.__setattr__(self, "coeffs", _truncate(c, self.order, 0))

    @property
    def rows(self) -> int:
        return self.coeffs.shape[1]

    @property
    def cols(self) -> int:
        return self.coeffs.shape[2]

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[1:]

    @staticmethod
    def constant(m, order: int = MAX_ORDER) -> "JetMat":
        m = np.atleast_2d(np.asarray(m, dtype=complex))
        c = np.zeros((NMON,) + m.shape, dtype=complex)
        c[0] = m
        return JetMat(c, order)

    @staticmethod
    def identity(n: int, order: int = MAX_ORDER) -> "JetMat":
        return JetMat.constant(np.eye(n), order)

    @staticmethod
    def zeros(rows: int, cols: int, order: int = MAX_ORDER) -> "JetMat":
        return JetMat(np.zeros((NMON, rows, cols), dtype=complex), order)

    @staticmethod
    def from_jet(j: Jet, m=None) -> "JetMat":
        """The jet ``j`` times the constant matrix ``m`` (default 1x1 identity)."""
        m = np.eye(1) if m is None else np.atleast_2d(np.asarray(m, dtype=complex))
        return JetMat(j.coeffs[:, None, None] * m[None], j.order)

    @staticmethod
    def from_entries(entries: Sequence[Sequence[Jet]]) -> "JetMat":
        rows, cols = len(entries), len(entries[0])
        c = np.zeros((NMON, rows, cols), dtype=complex)
        order = MAX_ORDER
        for i, row in enumerate(entries):
            if len(row) != cols:
                raise ShapeError("ragged entry list")
            for j, e in enumerate(row):
                c[:, i, j] = e.coeffs
                order = min(order, e.order)
        return JetMat(c, order)

    def constant_part(self) -> np.ndarray:
        return self.coeffs[0].copy()

    def entry(self, i: int, j: int) -> Jet:
        return Jet(self.coeffs[:, i, j], self.order)

    def allclose(self, other: "JetMat", atol: float = 1e-12) -> bool:
        n = min(self.order, other.order)
        mask = _DEGREE <= n
        return bool(np.allclose(self.coeffs[mask], other.coeffs[mask], atol=atol, rtol=0))

    def _check_same(self, other: "JetMat"):
        if self.shape != other.shape:
            raise ShapeError(f"shape mismatch {self.shape} vs {other.shape}")

    def __add__(self, other):
        if isinstance(other, np.ndarray):
            other = JetMat.constant(other)
        if not isinstance(other, JetMat):
            return NotImplemented
        self._check_same(other)
        return JetMat(self.coeffs + other.coeffs, min(self.order, other.order))

    __radd__ = __add__

    def __neg__(self):
        return JetMat(-self.coeffs, self.order)

    def __sub__(self, other):
        if isinstance(other, np.ndarray):
            other = JetMat.constant(other)
        if not isinstance(other, JetMat):
            return NotImplemented
        self._check_same(other)
        return JetMat(self.coeffs - other.coeffs, min(self.order, other.order))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            order = min(self.order, other.order)
            return JetMat(_jprod(other.coeffs[:, None, None], self.coeffs, order, "mul"), order)
        if np.isscalar(other):
            return JetMat(self.coeffs * other, self.order)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, np.ndarray):
            if other.ndim != 2 or other.shape[0] != self.cols:
                raise ShapeError("matrix product dimension mismatch")
            return JetMat(self.coeffs @ other, self.order)
        if not isinstance(other, JetMat):
            return NotImplemented
        if self.cols != other.rows:
            raise ShapeError(f"matrix product dimension mismatch {self.shape} @ {other.shape}")
        order = min(self.order, other.order)
        return JetMat(_jprod(self.coeffs, other.coeffs, order, "matmul"), order)

    def __rmatmul__(self, other):
        if isinstance(other, np.ndarray):
            if other.ndim != 2 or other.shape[1] != self.rows:
                raise ShapeError("matrix product dimension mismatch")
            return JetMat(other @ self.coeffs, self.order)
        return NotImplemented

    def trace(self) -> Jet:
        if self.rows != self.cols:
            raise ShapeError("trace of a non-square JetMat")
        return Jet(np.trace(self.coeffs, axis1=1, axis2=2), self.order)

    def adjoint(self) -> "JetMat":
        """Entrywise conjugate transpose (jet variables are real)."""
        return JetMat(np.conj(np.swapaxes(self.coeffs, 1, 2)), self.order)

    def derive(self, var: str) -> "JetMat":
        return JetMat(_jderive(self.coeffs, var, self.order, 0), self.order - 1)

    def truncated(self, order: int) -> "JetMat":
        return JetMat(self.coeffs, min(order, self.order))

    def kron(self, other) -> "JetMat":
        """Kronecker product ``self (x) other``."""
        if isinstance(other, np.ndarray):
            other = JetMat.constant(other)
        order = min(self.order, other.order)
        p, q, targets, starts = _pairs(order)
        a, b = self.coeffs[p], other.coeffs[q]
        prod = np.einsum("pij,pkl->pikjl", a, b).reshape(
            len(p), self.rows * other.rows, self.cols * other.cols
        )
        out = np.zeros((NMON,) + prod.shape[1:], dtype=complex)
        out[targets] = np.add.reduceat(prod, starts, axis=0)
        return JetMat(out, order)

    def inverse(self) -> "JetMat":
        if self.rows != self.cols:
            raise ShapeError("inverse of a non-square JetMat")
        m0 = self.constant_part()
        try:
            m0inv = np.linalg.inv(m0)
        except np.linalg.LinAlgError as exc:
            raise NonInvertibleJet("constant part is singular") from exc
        if np.linalg.cond(m0) > 1e12:
            raise NonInvertibleJet("constant part is numerically singular")
        n = JetMat(self.coeffs.copy(), self.order)
        n.coeffs[0] = 0.0
        step = -(JetMat.constant(m0inv, self.order) @ n)
        term = JetMat.constant(m0inv, self.order)
        total = term
        for _ in range(self.order):
            term = step @ term
            total = total + term
        return total

    def __repr__(self) -> str:
        return f"JetMat[{self.order}]{self.shape}(const=\n{self.constant_part()})"


JetLike = Union[Jet, JetMat]


# ---------------------------------------------------------------------------
# polynomials in xi_n with jet coefficients: arrays of shape (T, 36, r, c)


def _pmul(a: np.ndarray, b: np.ndarray, order: int, kind: str = "matmul") -> np.ndarray:
    ta, tb = a.shape[0], b.shape[0]
    if kind == "trace":
        out = np.zeros((ta + tb - 1, NMON), dtype=complex)
    elif kind == "mul":
        r = max(a.shape[2], b.shape[2])
        c = max(a.shape[3], b.shape[3])
        out = np.zeros((ta + tb - 1, NMON, r, c), dtype=complex)
    else:
        out = np.zeros((ta + tb - 1, NMON, a.shape[2], b.shape[3]), dtype=complex)
    for i in range(ta):
        if not a[i].any():
            continue
        out[i : i + tb] += _jprod(a[i], b, order, kind)
    return out


def _d_power(a2: Jet, k: int, order: int) -> np.ndarray:
    """Coefficients of (xi_n**2 + a2)**k as a scalar polynomial array."""
    d = np.zeros((3, NMON, 1, 1), dtype=complex)
    d[0, :, 0, 0] = a2.coeffs
    d[2, 0, 0, 0] = 1.0
    out = np.zeros((1, NMON, 1, 1), dtype=complex)
    out[0, 0, 0, 0] = 1.0
    for _ in range(k):
        out = _pmul(out, d, order, "mul")
    return out


def _pdivmod_monic(n: np.ndarray, m: np.ndarray, order: int):
    """Divide polynomial ``n`` by the monic scalar polynomial ``m``."""
    dn, dm = n.shape[0] - 1, m.shape[0] - 1
    if dn < dm:
        return np.zeros((1,) + n.shape[1:], dtype=complex), n.copy()
    rem = n.copy()
    quot = np.zeros((dn - dm + 1,) + n.shape[1:], dtype=complex)
    for k in range(dn - dm, -1, -1):
        lead = rem[k + dm].copy()
        quot[k] = lead
        if lead.any():
            rem[k : k + dm + 1] -= _scalar_poly_times(m, lead, order)
        rem[k + dm] = 0.0
    return quot, rem[:dm] if dm > 0 else np.zeros((1,) + n.shape[1:], dtype=complex)


def _scalar_poly_times(m: np.ndarray, coeff: np.ndarray, order: int) -> np.ndarray:
    """Scalar polynomial ``m`` (T, 36, 1, 1) times one matrix jet coefficient."""
    return _jprod(m, coeff[None], order, "mul")


def _trim(n: np.ndarray) -> np.ndarray:
    t = n.shape[0]
    while t > 1 and not n[t - 1].any():
        t -= 1
    return n[:t]


def _same_pole(a: Jet, b: Jet) -> bool:
    if a is b:
        return True
    n = min(a.order, b.order)
    mask = _DEGREE <= n
    return bool(np.array_equal(a.coeffs[mask], b.coeffs[mask]))


@dataclass(frozen=True, eq=False)
class RationalXiN:
    """``numer(xi_n) / (xi_n**2 + a2)**m`` with JetMat coefficients.

    ``numer`` has shape (T, 36, rows, cols): coefficient of ``xi_n**t`` in
    row ``t``.  The decomposition ``poly + num / (xi_n**2 + a2)**m`` is
    exposed through :attr:`poly` and :attr:`num`.
    """

    numer: np.ndarray
    pole_param_sq: Jet
    pole_order: int
    order: int = MAX_ORDER

    def __post_init__(self):
        n = np.asarray(self.numer, dtype=complex)
        if n.ndim != 4 or n.shape[1] != NMON:
            raise ShapeError(f"numerator must have shape (T, {NMON}, r, c), got {n.shape}")
        if self.pole_param_sq.value.real <= 0 or abs(self.pole_param_sq.value.imag) > 1e-14 * (
            1 + abs(self.pole_param_sq.value)
        ):
            raise BadInput("pole parameter a^2 must have a strictly positive constant part")
        if self.pole_order < 0:
            raise BadInput("negative pole order")
        if self.pole_order > MAX_POLE_ORDER:
            raise PoleOrderExceeded(f"pole order {self.pole_order} exceeds {MAX_POLE_ORDER}")
        order = min(self.order, self.pole_param_sq.order)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "numer", _trim(_truncate(n, order, 1)))

    # construction -----------------------------------------------------
    @staticmethod
    def from_parts(poly: Sequence[JetMat], num: Sequence[JetMat], a2: Jet, m: int) -> "RationalXiN":
        """Assemble ``sum poly[t] xi_n**t + (sum num[t] xi_n**t) / D**m``."""
        if len(num) > 2 * m and any(x.coeffs.any() for x in num[2 * m :]):
            raise BadInput("proper part must have numerator degree < 2m")
        mats = list(poly) + list(num)
        if not mats:
            raise BadInput("empty rational function")
        shape = mats[0].shape
        order = min([x.order for x in mats] + [a2.order])
        for x in mats:
            if x.shape != shape:
                raise ShapeError("coefficient shapes differ")
        p = np.stack([x.coeffs for x in poly]) if poly else np.zeros((1, NMON) + shape, complex)
        q = np.stack([x.coeffs for x in num]) if num else np.zeros((1, NMON) + shape, complex)
        total = _pmul(_d_power(a2, m, order), p, order, "mul")
        t = max(total.shape[0], q.shape[0])
        out = np.zeros((t, NMON) + shape, dtype=complex)
        out[: total.shape[0]] += total
        out[: q.shape[0]] += q
        return RationalXiN(out, a2, m, order)

    @staticmethod
    def polynomial(coeffs: Sequence[JetMat], a2: Jet) -> "RationalXiN":
        return RationalXiN.from_parts(coeffs, [], a2, 0)

    @staticmethod
    def constant(m: JetMat, a2: Jet) -> "RationalXiN":
        return RationalXiN(m.coeffs[None], a2, 0, min(m.order, a2.order))

    # inspection -------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.numer.shape[2:]

    @property
    def rows(self) -> int:
        return self.numer.shape[2]

    @property
    def cols(self) -> int:
        return self.numer.shape[3]

    @property
    def degree(self) -> int:
        """Degree in xi_n of the full numerator."""
        return self.numer.shape[0] - 1

    def _split(self):
        return _pdivmod_monic(self.numer, _d_power(self.pole_param_sq, self.pole_order, self.order), self.order)

    @property
    def poly(self) -> list:
        q, _ = self._split()
        q = _trim(q)
        if not q.any():
            return []
        return [JetMat(c, self.order) for c in q]

    @property
    def num(self) -> list:
        if self.pole_order == 0:
            return []
        _, r = self._split()
        return [JetMat(c, self.order) for c in r]

    def is_proper(self, rtol: float = 1e-11) -> bool:
        if self.pole_order == 0:
            return not self.numer.any()
        if self.degree < 2 * self.pole_order:
            return True
        q, _ = self._split()
        scale = max(1.0, float(np.abs(self.numer).max()))
        return float(np.abs(q).max()) <= rtol * scale

    # arithmetic -------------------------------------------------------
    def _check_compatible(self, other: "RationalXiN"):
        if not _same_pole(self.pole_param_sq, other.pole_param_sq):
            raise IncompatiblePoles("rational functions have different pole parameters")

    def _lift(self, m: int) -> np.ndarray:
        if m == self.pole_order:
            return self.numer
        return _pmul(_d_power(self.pole_param_sq, m - self.pole_order, self.order), self.numer, self.order, "mul")

    def _coerce(self, other):
        if isinstance(other, RationalXiN):
            return other
        if isinstance(other, JetMat):
            return RationalXiN.constant(other, self.pole_param_sq)
        if isinstance(other, np.ndarray):
            return RationalXiN.constant(JetMat.constant(other), self.pole_param_sq)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        self._check_compatible(other)
        if self.shape != other.shape:
            raise ShapeError(f"shape mismatch {self.shape} vs {other.shape}")
        m = max(self.pole_order, other.pole_order)
        order = min(self.order, other.order)
        a, b = self._lift(m), other._lift(m)
        t = max(a.shape[0], b.shape[0])
        out = np.zeros((t, NMON) + self.shape, dtype=complex)
        out[: a.shape[0]] += a
        out[: b.shape[0]] += b
        return RationalXiN(out, self.pole_param_sq, m, order)

    __radd__ = __add__

    def __neg__(self):
        return RationalXiN(-self.numer, self.pole_param_sq, self.pole_order, self.order)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def _product(self, other: "RationalXiN", kind: str) -> "RationalXiN":
        self._check_compatible(other)
        if kind == "matmul" and self.cols != other.rows:
            raise ShapeError(f"matrix product dimension mismatch {self.shape} @ {other.shape}")
        if kind == "trace" and (self.cols != other.rows or self.rows != other.cols):
            raise ShapeError("trace of product needs compatible square result")
        order = min(self.order, other.order)
        numer = _pmul(self.numer, other.numer, order, kind)
        if kind == "trace":
            numer = numer[:, :, None, None]
        m = self.pole_order + other.pole_order
        if m > MAX_POLE_ORDER:
            return _reduce_to_cap(numer, self.pole_param_sq, m, order)
        return RationalXiN(numer, self.pole_param_sq, m, order)

    def __matmul__(self, other):
        if isinstance(other, (JetMat, np.ndarray)):
            other = self._coerce(other)
        if not isinstance(other, RationalXiN):
            return NotImplemented
        return self._product(other, "matmul")

    def __rmatmul__(self, other):
        if isinstance(other, (JetMat, np.ndarray)):
            return self._coerce(other)._product(self, "matmul")
        return NotImplemented

    def trace_product(self, other: "RationalXiN") -> "RationalXiN":
        """``trace(self @ other)`` as a 1x1 rational, without forming the product."""
        return self._product(other, "trace")

    def __mul__(self, other):
        """Scale by a complex number or a scalar jet."""
        if isinstance(other, Jet):
            order = min(self.order, other.order)
            numer = _jprod(other.coeffs[:, None, None], self.numer, order, "mul")
            return RationalXiN(numer, self.pole_param_sq, self.pole_order, order)
        if np.isscalar(other):
            return RationalXiN(self.numer * other, self.pole_param_sq, self.pole_order, self.order)
        return NotImplemented

    __rmul__ = __mul__

    def scale(self, j: Jet) -> "RationalXiN":
        return self * j

    def scalar_mul(self, s: "RationalXiN") -> "RationalXiN":
        """Multiply by a 1x1 rational ``s`` acting as a scalar."""
        if s.shape != (1, 1):
            raise ShapeError("scalar_mul needs a 1x1 rational factor")
        self._check_compatible(s)
        order = min(self.order, s.order)
        numer = _pmul(s.numer, self.numer, order, "mul")
        m = self.pole_order + s.pole_order
        if m > MAX_POLE_ORDER:
            return _reduce_to_cap(numer, self.pole_param_sq, m, order)
        return RationalXiN(numer, self.pole_param_sq, m, order)

    def trace(self) -> "RationalXiN":
        if self.rows != self.cols:
            raise ShapeError("trace of a non-square rational")
        t = np.trace(self.numer, axis1=2, axis2=3)[:, :, None, None]
        return RationalXiN(t, self.pole_param_sq, self.pole_order, self.order)

    def kron_identity(self, k: int) -> "RationalXiN":
        if k == 1:
            return self
        numer = np.kron(self.numer, np.eye(k)[None, None])
        return RationalXiN(numer, self.pole_param_sq, self.pole_order, self.order)

    def derive_xi_n(self) -> "RationalXiN":
        """Exact derivative in xi_n; the pole order grows by at most one."""
        n = self.numer
        dn = np.zeros_like(n[:-1]) if n.shape[0] > 1 else np.zeros_like(n)
        if n.shape[0] > 1:
            dn = n[1:] * np.arange(1, n.shape[0])[:, None, None, None]
        m = self.pole_order
        if m == 0:
            return RationalXiN(dn, self.pole_param_sq, 0, self.order)
        d = _d_power(self.pole_param_sq, 1, self.order)
        first = _pmul(d, dn, self.order, "mul")
        second = np.zeros((n.shape[0] + 1,) + n.shape[1:], dtype=complex)
        second[1:] = 2 * m * n
        t = max(first.shape[0], second.shape[0])
        out = np.zeros((t,) + n.shape[1:], dtype=complex)
        out[: first.shape[0]] += first
        out[: second.shape[0]] -= second
        if m + 1 > MAX_POLE_ORDER:
            return _reduce_to_cap(out, self.pole_param_sq, m + 1, self.order)
        return RationalXiN(out, self.pole_param_sq, m + 1, self.order)

    def derive(self, var: str) -> "RationalXiN":
        """Derivative in a jet variable (x or xi'), including the pole parameter."""
        order = self.order
        dn = _jderive(self.numer, var, order, 1)
        da2 = self.pole_param_sq.derive(var) if self.pole_param_sq.order > 0 else None
        m = self.pole_order
        new_order = order - 1
        if m == 0 or da2 is None or not da2.truncated(new_order).coeffs.any():
            return RationalXiN(dn, self.pole_param_sq, m, new_order)
        d = _d_power(self.pole_param_sq, 1, new_order)
        first = _pmul(d, dn, new_order, "mul")
        second = _jprod(da2.coeffs[:, None, None], self.numer, new_order, "mul") * m
        t = max(first.shape[0], second.shape[0])
        out = np.zeros((t,) + self.numer.shape[1:], dtype=complex)
        out[: first.shape[0]] += first
        out[: second.shape[0]] -= second
        if m + 1 > MAX_POLE_ORDER:
            return _reduce_to_cap(out, self.pole_param_sq, m + 1, new_order)
        return RationalXiN(out, self.pole_param_sq, m + 1, new_order)

    def truncated(self, order: int) -> "RationalXiN":
        return RationalXiN(self.numer, self.pole_param_sq, self.pole_order, min(order, self.order))

    def reduced(self, rtol: float = 1e-12) -> "RationalXiN":
        """Cancel common factors of (xi_n**2 + a2) when the division is exact."""
        numer, m = self.numer, self.pole_order
        d = _d_power(self.pole_param_sq, 1, self.order)
        scale = max(float(np.abs(numer).max()), 1e-300)
        while m > 0:
            q, r = _pdivmod_monic(numer, d, self.order)
            if float(np.abs(r).max()) > rtol * scale:
                break
            numer, m = q, m - 1
        return RationalXiN(numer, self.pole_param_sq, m, self.order)

    def eval(self, xi_n: complex) -> JetMat:
        """Value at a complex ``xi_n`` as a JetMat (jets kept to ``order``)."""
        a2 = self.pole_param_sq
        dval = xi_n * xi_n + a2.value
        if self.pole_order > 0 and abs(dval) <= 1e-12 * max(1.0, abs(a2.value)):
            raise PoleEvaluation(f"xi_n = {xi_n} is a pole")
        powers = np.array([xi_n**t for t in range(self.numer.shape[0])])
        top = np.tensordot(powers, self.numer, axes=(0, 0))
        val = JetMat(top, self.order)
        if self.pole_order:
            inv = (Jet.constant(xi_n * xi_n, self.order) + a2).inverse() ** self.pole_order
            val = val * inv
        return val

    def eval_constant(self, xi_n: complex) -> np.ndarray:
        return self.eval(xi_n).constant_part()

    def __repr__(self) -> str:
        return f"RationalXiN(shape={self.shape}, deg={self.degree}, m={self.pole_order}, order={self.order})"


def _reduce_to_cap(numer, a2, m, order) -> RationalXiN:
    d = _d_power(a2, 1, order)
    scale = max(float(np.abs(numer).max()), 1e-300)
    while m > MAX_POLE_ORDER:
        q, r = _pdivmod_monic(numer, d, order)
        if float(np.abs(r).max()) > 1e-12 * scale:
            raise PoleOrderExceeded(f"pole order {m} exceeds {MAX_POLE_ORDER} and does not cancel")
        numer, m = q, m - 1
    return RationalXiN(numer, a2, m, order)


def jet_arith(a: Jet, b: Jet | None, kind: str, var: str | None = None) -> Jet:
    """Functional entry point: ``kind`` is add, mul, invert or derive."""
    if kind == "add":
        return a + b
    if kind == "mul":
        return a * b
    if kind == "invert":
        return a.inverse()
    if kind == "derive":
        return a.derive(var)
    raise BadInput(f"unknown jet operation {kind!r}")


def rational_combine(a: RationalXiN, b=None, kind: str = "add") -> RationalXiN:
    """Functional entry point: add, mul, scale (b a Jet) or derive_xi_n."""
    if kind == "add":
        return a + b
    if kind == "mul":
        return a @ b
    if kind == "scale":
        return a * b
    if kind == "derive_xi_n":
        return a.derive_xi_n()
    raise BadInput(f"unknown rational operation {kind!r}")


def rational_eval(r: RationalXiN, xi_n: complex) -> JetMat:
    return r.eval(xi_n)

"""Clifford module representations and twist data.

Two concrete representations of the Clifford algebra of R^4 are provided,
both with the convention ``c(v)**2 = -|v|**2``:

* ``spin``: an irreducible 4 dimensional representation by anti-Hermitian
  gamma matrices.
* ``exterior``: the 16 dimensional exterior algebra with
  ``c(e_j) = eps_j - iota_j`` and ``chat(e_j) = eps_j + iota_j``; the hatted
  generators square to ``+1`` and anticommute with every ``c``.

A twist by a fiber of dimension ``k`` acts as ``c (x) Id_k``; matrices on the
full module have size ``4k`` or ``16k`` and the trace is always taken over
the full module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import BadInput, ShapeError, Unsupported
from .jetring import Jet, JetMat

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


def _spin_gammas() -> list[np.ndarray]:
    return [
        1j * np.kron(_SX, _I2),
        1j * np.kron(_SY, _I2),
        1j * np.kron(_SZ, _SX),
        1j * np.kron(_SZ, _SY),
    ]


def exterior_basis(n: int = 4) -> list[tuple]:
    """Increasing multi-indices ordered by degree, then lexicographically."""
    return [s for q in range(n + 1) for s in combinations(range(n), q)]


def _exterior_ops(n: int = 4):
    basis = exterior_basis(n)
    index = {s: i for i, s in enumerate(basis)}
    dim = len(basis)
    eps, iota = [], []
    for j in range(n):
        e = np.zeros((dim, dim), dtype=complex)
        t = np.zeros((dim, dim), dtype=complex)
        for s in basis:
            sign = (-1) ** sum(1 for a in s if a < j)
            if j in s:
                rest = tuple(a for a in s if a != j)
                t[index[rest], index[s]] = sign
            else:
                grown = tuple(sorted(s + (j,)))
                e[index[grown], index[s]] = sign
        eps.append(e)
        iota.append(t)
    return eps, iota


@dataclass(frozen=True)
class CliffordRep:
    """Generators of ``c`` (and ``chat`` for forms) on the twisted module."""

    n: int
    kind: str
    fiber_dim: int
    gamma: tuple
    gamma_hat: tuple
    base_dim: int

    @property
    def module_dim(self) -> int:
        return self.base_dim * self.fiber_dim

    def c(self, i: int) -> np.ndarray:
        """``c(e_i) (x) Id_F`` on the full module."""
        return np.kron(self.gamma[i], np.eye(self.fiber_dim))

    def c_hat(self, i: int) -> np.ndarray:
        if self.kind != "exterior":
            raise Unsupported("hatted Clifford action exists only on forms")
        return np.kron(self.gamma_hat[i], np.eye(self.fiber_dim))

    def identity(self) -> np.ndarray:
        return np.eye(self.module_dim, dtype=complex)

    def fiber(self, b) -> np.ndarray:
        """``Id_base (x) b`` for a fiber endomorphism ``b``."""
        b = np.asarray(b, dtype=complex)
        if b.shape != (self.fiber_dim, self.fiber_dim):
            raise ShapeError(f"fiber matrix must be {self.fiber_dim}x{self.fiber_dim}")
        return np.kron(np.eye(self.base_dim), b)

    def fiber_jet(self, b: JetMat) -> JetMat:
        return JetMat.constant(np.eye(self.base_dim)).kron(b)

    def base_jet(self, m: JetMat) -> JetMat:
        """A base-module jet matrix tensored with ``Id_F``."""
        return m.kron(np.eye(self.fiber_dim))


def build_rep(n: int = 4, kind: str = "spin", fiber_dim: int = 1) -> CliffordRep:
    """Construct the spin or exterior representation twisted by ``C^k``."""
    if n != 4:
        raise Unsupported("only the four dimensional case is implemented")
    if fiber_dim < 1:
        raise BadInput("fiber dimension must be at least 1")
    if kind == "spin":
        return CliffordRep(n, kind, fiber_dim, tuple(_spin_gammas()), (), 4)
    if kind == "exterior":
        eps, iota = _exterior_ops(n)
        gamma = tuple(e - t for e, t in zip(eps, iota))
        gamma_hat = tuple(e + t for e, t in zip(eps, iota))
        return CliffordRep(n, kind, fiber_dim, gamma, gamma_hat, 16)
    raise BadInput(f"unknown representation kind {kind!r}")


def clifford_of_covector(rep: CliffordRep, xi: Sequence[complex], hatted: bool = False) -> np.ndarray:
    """``sum_i xi_i c(e_i)`` (or the hatted version) on the full module."""
    if len(xi) != rep.n:
        raise ShapeError(f"covector must have {rep.n} components")
    gens = [rep.c_hat(i) if hatted else rep.c(i) for i in range(rep.n)]
    return sum(x * g for x, g in zip(xi, gens))


def trace(rep: CliffordRep, m: np.ndarray) -> complex:
    m = np.asarray(m)
    if m.shape != (rep.module_dim, rep.module_dim):
        raise ShapeError(f"expected a {rep.module_dim}x{rep.module_dim} matrix, got {m.shape}")
    return complex(np.trace(m))


def clifford_twist(rep: CliffordRep, fiber_mats: Sequence[np.ndarray], hatted: bool = False) -> np.ndarray:
    """``sum_j c(e_j) (x) B_j``, the Clifford contraction of a fiber-valued one-form."""
    gens = rep.gamma_hat if hatted else rep.gamma
    if hatted and rep.kind != "exterior":
        raise Unsupported("hatted Clifford action exists only on forms")
    return sum(np.kron(g, np.asarray(b, dtype=complex)) for g, b in zip(gens, fiber_mats))


@dataclass(frozen=True)
class TwistData:
    """Pointwise data of the twisting bundle near the base point.

    All one-form valued inputs are lists of four ``k x k`` jet matrices
    holding the coordinate components along ``dx_1 .. dx_4``; at the base
    point the coordinate frame is orthonormal, so these are also the frame
    components there.  ``phi`` feeds the twisted Dirac operator,
    ``omega_f`` the twisted signature operator, ``sigma_f`` is the
    connection form of the metric part of the fiber connection and ``f``
    is the conformal factor.
    """

    fiber_dim: int
    phi: tuple
    omega_f: tuple
    sigma_f: tuple
    f: Jet = field(default_factory=lambda: Jet.constant(1.0))

    def __post_init__(self):
        k = self.fiber_dim
        if k < 1:
            raise BadInput("fiber dimension must be at least 1")
        for name in ("phi", "omega_f", "sigma_f"):
            vals = getattr(self, name)
            if len(vals) != 4:
                raise BadInput(f"{name} needs four components")
            for v in vals:
                if not isinstance(v, JetMat) or v.shape != (k, k):
                    raise BadInput(f"{name} components must be {k}x{k} JetMat values")
        if self.f.value == 0:
            raise BadInput("the conformal factor must not vanish at the base point")

    @property
    def phi_star(self) -> tuple:
        return tuple(p.adjoint() for p in self.phi)

    @property
    def omega_f_star(self) -> tuple:
        return tuple(w.adjoint() for w in self.omega_f)

    @property
    def f_inv(self) -> Jet:
        return self.f.inverse()

    @staticmethod
    def trivial(fiber_dim: int = 1, f: Jet | None = None) -> "TwistData":
        z = tuple(JetMat.zeros(fiber_dim, fiber_dim) for _ in range(4))
        return TwistData(fiber_dim, z, z, z, f if f is not None else Jet.constant(1.0))

    @staticmethod
    def from_constants(
        fiber_dim: int,
        phi=None,
        omega_f=None,
        sigma_f=None,
        f: Jet | None = None,
    ) -> "TwistData":
        """Convenience constructor from constant ``k x k`` arrays."""

        def lift(vals):
            if vals is None:
                return tuple(JetMat.zeros(fiber_dim, fiber_dim) for _ in range(4))
            return tuple(v if isinstance(v, JetMat) else JetMat.constant(v) for v in vals)

        return TwistData(fiber_dim, lift(phi), lift(omega_f), lift(sigma_f), f if f is not None else Jet.constant(1.0))

import numpy as np
import pytest
from hypothesis import settings

from ncresidue.jetring import NMON, Jet, JetMat, RationalXiN

settings.register_profile("engine", deadline=None, max_examples=25, derandomize=True, print_blob=True)
settings.load_profile("engine")


def random_jet(rng: np.random.Generator, const: complex | None = None) -> Jet:
    c = rng.normal(size=NMON) + 1j * rng.normal(size=NMON)
    if const is not None:
        c[0] = const
    return Jet(c)


def random_jetmat(rng: np.random.Generator, rows: int, cols: int) -> JetMat:
    return JetMat(rng.normal(size=(NMON, rows, cols)) + 1j * rng.normal(size=(NMON, rows, cols)))


def scalar_rational(numer, m: int, a2: float = 1.0) -> RationalXiN:
    """``sum numer[t] xi_n**t / (xi_n**2 + a2)**m`` with constant scalar coefficients."""
    arr = np.zeros((len(numer), NMON, 1, 1), dtype=complex)
    for t, v in enumerate(numer):
        arr[t, 0, 0, 0] = v
    return RationalXiN(arr, Jet.constant(a2), m)


def value(r: RationalXiN, xi_n: complex) -> complex:
    return complex(r.eval(xi_n).constant_part()[0, 0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

"""Built-in example systems: a flexible-structure model and an inverter chain."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .generator import InterpolationSpec
from .linear import StateSpace
from .poly import PolyMap
from .series import PolyVectorField

__all__ = [
    "FssParams",
    "FSS_FREQUENCIES",
    "build_fss",
    "fss_spec",
    "tanh_coefficients",
    "InverterParams",
    "build_inverter_chain",
    "inverter_spec",
]

FSS_FREQUENCIES = (0.01, 0.1, 1.0, 5.5, 10.0, 16.0, 20.0, 30.0, 50.0, 100.0, 1000.0, 10000.0)


@dataclass(frozen=True)
class FssParams:
    """Random lightly damped modal system; values drawn uniformly from the
    open ranges below with numpy's PCG64 generator."""

    K: int = 30
    seed: int = 1009
    chi_range: tuple = (0.0, 0.001)
    phi_range: tuple = (0.0, 100.0)
    b_range: tuple = (0.0, 1.0)
    c_range: tuple = (0.0, 10.0)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")


def _uniform_open(rng, lo, hi, size):
    # Generator.uniform samples [lo, hi); reject the closed end point
    x = rng.uniform(lo, hi, size)
    while np.any(x <= lo):
        bad = x <= lo
        x[bad] = rng.uniform(lo, hi, int(bad.sum()))
    return x


def build_fss(params=None):
    """Block-diagonal system with ``A_k = [[-2 chi phi, -phi], [phi, 0]]``,
    ``B_k = [b, 0]^T`` and ``C_k = [c_r, c_d / phi]``."""
    p = params or FssParams()
    rng = np.random.default_rng(p.seed)
    chi = _uniform_open(rng, *p.chi_range, p.K)
    phi = _uniform_open(rng, *p.phi_range, p.K)
    b = _uniform_open(rng, *p.b_range, p.K)
    c = _uniform_open(rng, *p.c_range, (p.K, 2))
    A = sla.block_diag(*[np.array([[-2 * x * f, -f], [f, 0.0]]) for x, f in zip(chi, phi)])
    B = np.column_stack([b, np.zeros(p.K)]).reshape(-1, 1)
    C = np.column_stack([c[:, 0], c[:, 1] / phi]).reshape(1, -1)
    return StateSpace(A, B, C)


def fss_spec(frequencies=FSS_FREQUENCIES):
    return InterpolationSpec.from_frequencies(frequencies)


def tanh_coefficients(degree):
    """Taylor coefficients ``t_0 .. t_degree`` of ``tanh`` at zero.

    From ``tanh' = 1 - tanh^2``: ``(k + 1) t_(k+1) = [k == 0] - sum t_i t_(k-i)``.
    """
    t = np.zeros(degree + 1)
    for k in range(degree):
        conv = sum(t[i] * t[k - i] for i in range(k + 1))
        t[k + 1] = ((1.0 if k == 0 else 0.0) - conv) / (k + 1)
    return t


@dataclass(frozen=True)
class InverterParams:
    """Chain of ``n`` RC stages joined by inverters.

    Stage i (1-based) has time constant ``tau(i)``; the inverter feeding
    stage ``i`` is supplied with ``vdd(i - 1)`` when ``vdd_shift`` is true
    (and ``vdd(i)`` otherwise).
    """

    n: int = 12
    V_T: float = 0.25
    alpha: float = 4.0
    vdd_shift: bool = True
    expand_degree: int = 3

    @staticmethod
    def vdd(i):
        return 1.0 / (4.0 * (i + 1))

    @staticmethod
    def tau(i):
        return 4.0 * (i + 1)


def build_inverter_chain(params=None):
    """Polynomial field of the inverter chain and the output map ``h(x) = x_n``.

    ``tanh(x / V_T)`` is replaced by its Taylor polynomial of degree
    ``expand_degree``. Returns ``(field, h)``.
    """
    p = params or InverterParams()
    if p.n < 2:
        raise ValueError("need at least two stages")
    if p.expand_degree < 1 or p.expand_degree % 2 == 0:
        raise ValueError("expand_degree must be odd and positive")
    n, d = p.n, p.expand_degree
    t = tanh_coefficients(d)
    coeffs = {}

    def mono(var, power=1):
        e = [0] * (n + 1)
        e[var] = power
        return tuple(e)

    coeffs[(0, mono(0))] = -1.0 / p.tau(1)
    coeffs[(0, mono(n))] = p.alpha / p.tau(1)
    for i in range(2, n + 1):
        tau = p.tau(i)
        vdd = p.vdd(i - 1) if p.vdd_shift else p.vdd(i)
        coeffs[(i - 1, mono(i - 1))] = -1.0 / tau
        for k in range(1, d + 1, 2):
            coeffs[(i - 1, mono(i - 2, k))] = -vdd * t[k] / (tau * p.V_T**k)
    fld = PolyVectorField(PolyMap(n + 1, n, d, coeffs))
    h = PolyMap(n, 1, 1, {(0, tuple(1 if j == n - 1 else 0 for j in range(n))): 1.0})
    return fld, h


def inverter_spec(frequencies=(1.0, 2.0, 3.0, 4.0, 5.0)):
    return InterpolationSpec.from_frequencies(frequencies)

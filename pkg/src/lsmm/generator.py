"""Signal generators, canonical coordinates and admissibility predicates."""

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    DuplicatePoints,
    NotConjugateClosed,
    NotObservable,
    RankDeficient,
)
from .linalg import (
    Spectrum,
    _as_matrix,
    _values,
    is_observable,
    observability_matrix,
    spectrum,
)

__all__ = [
    "InterpolationSpec",
    "SignalGenerator",
    "CanonicalForm",
    "build_generator",
    "build_canonical_T",
    "spectrum_k",
    "first_resonance",
    "check_nonresonance",
    "check_conditioned_invariant",
    "check_invariant_under",
    "weight_gram",
]

POINT_TOL = 1e-12


@dataclass(frozen=True)
class InterpolationSpec:
    """Distinct interpolation points and the number of moments at each.

    ``orders[i] = k_i`` means moments ``eta_0 .. eta_{k_i}`` at ``points[i]``.
    """

    points: tuple
    orders: tuple

    def __post_init__(self):
        pts = tuple(complex(p) for p in self.points)
        ords = tuple(int(k) for k in self.orders)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "orders", ords)
        if len(pts) != len(ords):
            raise ValueError("points and orders differ in length")
        if any(k < 0 for k in ords):
            raise ValueError("orders must be non-negative")
        scale = 1.0 + max((abs(p) for p in pts), default=0.0)
        for i, j in itertools.combinations(range(len(pts)), 2):
            if abs(pts[i] - pts[j]) <= POINT_TOL * scale:
                raise DuplicatePoints(f"point {pts[i]} appears twice")
        for p, k in zip(pts, ords):
            if abs(p.imag) <= POINT_TOL * scale:
                continue
            match = [j for j, q in enumerate(pts) if abs(q - p.conjugate()) <= POINT_TOL * scale]
            if not match:
                raise NotConjugateClosed(f"point {p} has no conjugate")
            if ords[match[0]] != k:
                raise NotConjugateClosed(f"conjugate points {p} have different orders")

    @classmethod
    def from_frequencies(cls, omegas, order=0):
        """Points ``+-i omega`` for each frequency (a single 0 for omega = 0)."""
        points, orders = [], []
        for w in omegas:
            w = float(w)
            if w == 0.0:
                points.append(0j)
                orders.append(order)
            else:
                points += [complex(0, abs(w)), complex(0, -abs(w))]
                orders += [order, order]
        return cls(tuple(points), tuple(orders))

    @property
    def nu(self):
        return sum(k + 1 for k in self.orders)

    def characteristic_polynomial(self):
        """Coefficients of prod (s - s_i)^(k_i + 1), highest power first."""
        roots = [p for p, k in zip(self.points, self.orders) for _ in range(k + 1)]
        return np.real_if_close(np.poly(roots), tol=1e6)


@dataclass(frozen=True)
class SignalGenerator:
    """Autonomous linear exosystem ``omega' = S omega``, ``theta = L omega``."""

    S: np.ndarray
    L: np.ndarray
    omega0: np.ndarray = None
    spec: InterpolationSpec = field(default=None, compare=False)

    def __post_init__(self):
        S = _as_matrix(self.S, "S").astype(float)
        L = _as_matrix(self.L, "L").astype(float)
        nu = S.shape[0]
        if S.shape != (nu, nu) or L.shape != (1, nu):
            raise ValueError("S must be nu x nu and L 1 x nu")
        w0 = L.T.copy() if self.omega0 is None else np.asarray(self.omega0, float).reshape(nu, 1)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "omega0", w0)

    @property
    def nu(self):
        return self.S.shape[0]

    def is_skew(self, tol=1e-12):
        return np.linalg.norm(self.S + self.S.T) <= tol * max(1.0, np.linalg.norm(self.S))


@dataclass(frozen=True)
class CanonicalForm:
    """``S T = T J`` and ``L T = Lambda`` with ``J`` in upper Jordan form.

    ``T`` is complex whenever some interpolation point is non-real; ``is_real``
    flags the case where it is not.
    """

    J: np.ndarray
    Lambda: np.ndarray
    T: np.ndarray
    points: tuple
    orders: tuple

    @property
    def is_real(self):
        return not np.iscomplexobj(self.T) or np.abs(self.T.imag).max() == 0.0


def _real_block(p, k):
    """Real Jordan block for the point ``p`` (and its conjugate) of order k."""
    if abs(p.imag) == 0.0:
        return p.real * np.eye(k + 1) + np.eye(k + 1, k=1)
    a, b = p.real, abs(p.imag)
    C = np.array([[a, b], [-b, a]])
    M = np.kron(np.eye(k + 1), C)
    M += np.kron(np.eye(k + 1, k=1), np.eye(2))
    return M


def build_generator(spec, L=None, omega0=None):
    """Real generator ``(S, L)`` whose spectrum encodes ``spec``.

    Conjugate pairs ``a +- ib`` become real Jordan blocks built from
    ``[[a, b], [-b, a]]`` (for ``+-i omega``: ``[[0, omega], [-omega, 0]]``);
    real points become upper Jordan blocks. Blocks follow the order of the
    points, each pair placed at its first member. ``L`` defaults to
    ``ones / sqrt(nu)`` and ``omega0`` to ``L^T``.
    """
    blocks, seen = [], []
    for p, k in zip(spec.points, spec.orders):
        if any(abs(p - q) <= POINT_TOL * (1 + abs(p)) for q in seen):
            continue
        seen += [p, p.conjugate()]
        blocks.append(_real_block(p, k))
    S = sla.block_diag(*blocks)
    nu = S.shape[0]
    if L is None:
        L = np.ones((1, nu)) / np.sqrt(nu)
    gen = SignalGenerator(S, L, omega0, spec)
    if not is_observable(gen.S, gen.L):
        raise NotObservable("generated (S, L) is not observable")
    return gen


def _points_from_S(S):
    spec = spectrum(S)
    return tuple(spec.eigenvalues), tuple(int(m) - 1 for m in spec.multiplicities)


def build_canonical_T(gen, method="chain"):
    """Transformation ``T`` with ``S T = T J`` and ``L T = Lambda``.

    ``method="chain"`` solves, per point ``s``, the stacked least-squares
    systems ``[S - s I; L] t_j = [t_{j-1}; delta_{j0}]`` which are well
    conditioned whenever (S, L) is observable. ``method="observability"``
    uses ``T = O(S, L)^-1 O(J, Lambda)`` and is only sensible for small nu.
    """
    S, L = gen.S, gen.L
    nu = gen.nu
    if not is_observable(S, L):
        raise NotObservable("(S, L) is not observable")
    if gen.spec is not None:
        points, orders = gen.spec.points, gen.spec.orders
    else:
        points, orders = _points_from_S(S)

    Jb, lam_blocks = [], []
    for p, k in zip(points, orders):
        Jb.append(p * np.eye(k + 1) + np.eye(k + 1, k=1))
        e1 = np.zeros((1, k + 1))
        e1[0, 0] = 1.0
        lam_blocks.append(e1)
    J = sla.block_diag(*Jb).astype(complex)
    Lam = np.hstack(lam_blocks).astype(complex)

    if method == "observability":
        T = np.linalg.solve(observability_matrix(S, L).astype(complex), observability_matrix(J, Lam))
    elif method == "chain":
        cols = []
        for p, k in zip(points, orders):
            M = np.vstack([S - p * np.eye(nu), L])
            prev = None
            for j in range(k + 1):
                rhs = np.zeros(nu + 1, dtype=complex)
                if j == 0:
                    rhs[-1] = 1.0
                else:
                    rhs[:nu] = prev
                t = np.linalg.lstsq(M, rhs, rcond=None)[0]
                cols.append(t)
                prev = t
        T = np.column_stack(cols)
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.all(np.abs(np.imag(points)) == 0):
        T = T.real
        J = J.real
        Lam = Lam.real
    return CanonicalForm(J, Lam, T, tuple(points), tuple(orders))


def weight_gram(T):
    """``T T^H``, real for conjugate-symmetric ``T``; the weight used by Q."""
    T = np.asarray(T)
    G = T @ T.conj().T
    return np.real(G)


def spectrum_k(S_spec, k):
    """All sums ``sum lambda_i k_i`` with ``sum k_i = k`` (deduplicated)."""
    lam = _values(S_spec)
    if isinstance(S_spec, Spectrum):
        lam = S_spec.eigenvalues
    lam = np.unique(np.round(lam, 12))
    sums = [sum(c) for c in itertools.combinations_with_replacement(lam, k)]
    out = []
    tol = 1e-10 * (1.0 + np.abs(lam).max(initial=0.0) * k)
    for s in sums:
        if not any(abs(s - o) <= tol for o in out):
            out.append(complex(s))
    return np.array(out, dtype=complex)


def first_resonance(A_spec, S_spec, k_max, tol=1e-8):
    """Smallest k <= k_max with sigma(A) meeting sigma^k(S), else None."""
    a = _values(A_spec)
    for k in range(1, k_max + 1):
        sk = spectrum_k(S_spec, k)
        if a.size and sk.size and np.min(np.abs(a[:, None] - sk[None, :])) <= tol:
            return k
    return None


def check_nonresonance(A_spec, S_spec, k_max, tol=1e-8):
    """True iff sigma(A) and sigma^k(S) are disjoint for all k <= k_max."""
    return first_resonance(A_spec, S_spec, k_max, tol) is None


def _full_row_rank(P):
    P = _as_matrix(P, "P")
    if np.linalg.matrix_rank(P) < P.shape[0]:
        raise RankDeficient(f"P has rank {np.linalg.matrix_rank(P)} < {P.shape[0]}")
    return P


def check_conditioned_invariant(P, S, L, tol=1e-9):
    """True iff ``S (ker P cap ker L)`` lies in ``ker P``."""
    P = _full_row_rank(P)
    S, L = _as_matrix(S, "S"), _as_matrix(L, "L")
    Z = sla.null_space(np.vstack([P, L]))
    if Z.shape[1] == 0:
        return True
    scale = max(1.0, np.linalg.norm(P, 2) * np.linalg.norm(S, 2))
    return np.linalg.norm(P @ S @ Z, 2) <= tol * scale


def check_invariant_under(P, M, tol=1e-9):
    """True iff ``M ker P`` lies in ``ker P``."""
    P = _full_row_rank(P)
    M = _as_matrix(M, "M")
    Z = sla.null_space(P)
    if Z.shape[1] == 0:
        return True
    scale = max(1.0, np.linalg.norm(P, 2) * np.linalg.norm(M, 2))
    return np.linalg.norm(P @ M @ Z, 2) <= tol * scale

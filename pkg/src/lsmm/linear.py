"""Linear least-squares moment matching."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NotAdmissible,
    NotConditionedInvariant,
    PointInSpectrum,
    PosterioriSpectrumClash,
    RankDeficient,
    SpectraOverlap,
)
from .generator import (
    SignalGenerator,
    build_canonical_T,
    build_generator,
    check_conditioned_invariant,
    check_invariant_under,
    weight_gram,
)
from .linalg import (
    _as_matrix,
    disjointness_tol,
    dominant_eigenvalues,
    dual_norm_row,
    is_observable,
    output_injection_basis,
    pole_place_siso,
    real_left_eigenbasis,
    solve_sylvester,
    spectra_distance,
)

__all__ = [
    "StateSpace",
    "MomentSet",
    "ReductionParams",
    "ReducedModel",
    "moments_closed_form",
    "solve_pi",
    "solve_P",
    "index_J",
    "derive_Q",
    "admissibility_report",
    "assemble_family",
    "solve_relaxed",
    "error_bound",
    "dominant_reduction_pipeline",
    "surrogate_model",
    "surrogate_generator",
    "project_model",
    "dual_path_model",
    "is_controllable",
]


@dataclass(frozen=True)
class StateSpace:
    """Single-input single-output system ``x' = A x + B u``, ``y = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A").astype(float)
        n = A.shape[0]
        B = _as_matrix(self.B, "B").astype(float).reshape(n, -1)
        C = _as_matrix(self.C, "C").astype(float).reshape(-1, n)
        if A.shape != (n, n):
            raise ValueError("A must be square")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.A.shape[0]

    def eigenvalues(self):
        return np.linalg.eigvals(self.A)

    def is_stable(self):
        return bool(np.all(self.eigenvalues().real < 0))

    def transfer(self, s):
        """``C (sI - A)^-1 B`` at each point of ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        eye = np.eye(self.n)
        out = [(self.C @ np.linalg.solve(p * eye - self.A, self.B))[0, 0] for p in s]
        return np.array(out)


@dataclass(frozen=True)
class MomentSet:
    """Moments ordered point by point, ``eta_0 .. eta_k`` within each point."""

    values: np.ndarray
    spec: object

    def __len__(self):
        return len(self.values)

    def at(self, point_index, k):
        offset = sum(o + 1 for o in self.spec.orders[:point_index])
        return self.values[offset + k]


@dataclass(frozen=True)
class ReductionParams:
    """Free parameters of the family. ``Q`` is derived from ``P`` and ``T``
    when not given (and left ``None`` if ``P`` is rank deficient)."""

    P: np.ndarray
    Delta: np.ndarray
    T: np.ndarray
    Q: np.ndarray = None

    def __post_init__(self):
        P = _as_matrix(self.P, "P").astype(float)
        nu = P.shape[1]
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Delta", _as_matrix(self.Delta, "Delta").astype(float).reshape(nu, 1))
        object.__setattr__(self, "T", _as_matrix(self.T, "T"))
        if self.Q is None:
            try:
                object.__setattr__(self, "Q", derive_Q(P, self.T))
            except RankDeficient:
                pass
        else:
            object.__setattr__(self, "Q", _as_matrix(self.Q, "Q").astype(float))

    @property
    def r(self):
        return self.P.shape[0]


@dataclass(frozen=True)
class ReducedModel:
    """Reduced model ``xi' = F xi + G v``, ``psi = H xi``.

    ``spectrum_clash`` is None when no generator was available to compare
    with, otherwise whether ``sigma(F)`` meets ``sigma(S)``.
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    provenance: ReductionParams = field(default=None, compare=False)
    spectrum_clash: bool = field(default=None, compare=False)

    def __post_init__(self):
        F = _as_matrix(self.F, "F").astype(float)
        r = F.shape[0]
        if F.shape != (r, r):
            raise ValueError("F must be square")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", _as_matrix(self.G, "G").astype(float).reshape(r, -1))
        object.__setattr__(self, "H", _as_matrix(self.H, "H").astype(float).reshape(-1, r))

    @property
    def r(self):
        return self.F.shape[0]

    def as_state_space(self):
        return StateSpace(self.F, self.G, self.H)


def _clash(F, S):
    return spectra_distance(np.linalg.eigvals(F), np.linalg.eigvals(S)) <= disjointness_tol(
        np.linalg.eigvals(F), np.linalg.eigvals(S)
    )


def moments_closed_form(sys, spec):
    """``eta_k(s) = C (sI - A)^-(k+1) B`` for every point and order in ``spec``."""
    eig = sys.eigenvalues()
    eye = np.eye(sys.n)
    values = []
    for s, k in zip(spec.points, spec.orders):
        if spectra_distance([s], eig) <= disjointness_tol([s], eig):
            raise PointInSpectrum(f"{s} is an eigenvalue of A")
        x = sys.B.astype(complex)
        M = s * eye - sys.A
        for _ in range(k + 1):
            x = np.linalg.solve(M, x)
            values.append((sys.C @ x)[0, 0])
    return MomentSet(np.array(values, dtype=complex), spec)


def solve_pi(sys, gen):
    """Unique ``Pi`` with ``A Pi + B L = Pi S``."""
    return solve_sylvester(sys.A, sys.B, gen.L, gen.S)


def solve_P(model, gen):
    """Unique ``P`` with ``F P + G L = P S``."""
    return solve_sylvester(model.F, model.G, gen.L, gen.S)


def _weight(gen, T):
    if T is None:
        T = build_canonical_T(gen).T
    return np.asarray(T)


def index_J(sys, model, gen, T=None):
    """``||(C Pi - H P) T||^2``; ``T`` defaults to the canonical transformation."""
    T = _weight(gen, T)
    E = sys.C @ solve_pi(sys, gen) - model.H @ solve_P(model, gen)
    return float(np.sum(np.abs(E @ T) ** 2))


def error_bound(sys, model, gen):
    """``||C Pi - H P||``, an upper bound on the steady-state rms error."""
    E = sys.C @ solve_pi(sys, gen) - model.H @ solve_P(model, gen)
    return dual_norm_row(E)


def derive_Q(P, T):
    """``Q = W P^T (P W P^T)^-1`` with the weight ``W = Re(T T^H)``.

    For real ``T`` this is ``T T^T``.
    """
    P = _as_matrix(P, "P").astype(float)
    r = P.shape[0]
    if np.linalg.matrix_rank(P) < r:
        raise RankDeficient("P is rank deficient")
    W = weight_gram(T)
    WPt = W @ P.T
    return np.linalg.solve(P @ WPt, WPt.T).T


def _rel_norm(R, *scales):
    return np.linalg.norm(R) / max([1.0] + [np.linalg.norm(s) for s in scales])


def admissibility_report(gen, params, tol=1e-8):
    """Map each condition ``A_P``, ``A_Q``, ``A_Delta`` to (ok, detail)."""
    P, Delta, Q = params.P, params.Delta, params.Q
    r, nu = P.shape
    report = {}
    if np.linalg.matrix_rank(P) < r:
        report["A_P"] = (False, "P is rank deficient")
    elif not check_conditioned_invariant(P, gen.S, gen.L):
        report["A_P"] = (False, "ker P is not (S, L) conditioned invariant")
    else:
        report["A_P"] = (True, "")
    if not report["A_P"][0] or Q is None:
        report["A_Q"] = (False, "Q undefined")
        report["A_Delta"] = (False, "not checked")
        return report
    formula = derive_Q(P, params.T)
    if _rel_norm(P @ Q - np.eye(r)) > tol:
        report["A_Q"] = (False, "P Q != I")
    elif _rel_norm(Q - formula, formula) > tol:
        report["A_Q"] = (False, "Q differs from the weighted pseudo-inverse")
    else:
        report["A_Q"] = (True, "")
    M = gen.S - Delta @ gen.L
    if not check_invariant_under(P, M):
        report["A_Delta"] = (False, "ker P is not (S - Delta L)-invariant")
    elif _clash(P @ M @ Q, gen.S):
        report["A_Delta"] = (False, "sigma(F) meets sigma(S)")
    else:
        report["A_Delta"] = (True, "")
    return report


def assemble_family(sys, gen, params, check=True):
    """``F = P (S - Delta L) Q``, ``G = P Delta``, ``H = C Pi Q``.

    Raises NotAdmissible naming the first violated condition.
    """
    if check:
        for cond, (ok, detail) in admissibility_report(gen, params).items():
            if not ok:
                raise NotAdmissible(cond, detail)
    P, Q, Delta = params.P, params.Q, params.Delta
    Pi = solve_pi(sys, gen)
    F = P @ (gen.S - Delta @ gen.L) @ Q
    return ReducedModel(F, P @ Delta, sys.C @ Pi @ Q, params, _clash(F, gen.S))


def solve_relaxed(sys, gen, P, T=None, tol=1e-8):
    """Minimize the index over ``H`` subject to ``F P + G L = P S``.

    ``H`` is the unconstrained least-squares solution; ``(F, G)`` solve the
    linear constraint, which must be consistent. A spectrum clash between
    ``F`` and ``S`` is reported as a PosterioriSpectrumClash warning.
    """
    P = _as_matrix(P, "P").astype(float)
    r = P.shape[0]
    T = _weight(gen, T)
    Q = derive_Q(P, T)
    Pi = solve_pi(sys, gen)
    H = sys.C @ Pi @ Q
    PL = np.vstack([P, gen.L])
    PS = P @ gen.S
    X = np.linalg.lstsq(PL.T, PS.T, rcond=None)[0].T
    if _rel_norm(X @ PL - PS, PS) > tol:
        raise NotConditionedInvariant("F P + G L = P S has no solution")
    F, G = X[:, :r], X[:, r:]
    clash = _clash(F, gen.S)
    if clash:
        warnings.warn("sigma(F) meets sigma(S)", PosterioriSpectrumClash, stacklevel=2)
    params = ReductionParams(P, np.zeros((P.shape[1], 1)), T, Q)
    return ReducedModel(F, G, H, params, clash)


def surrogate_model(sys, gen, Delta):
    """Order-nu model ``(S - Delta L, Delta, C Pi)`` matching all nu moments."""
    Delta = np.asarray(Delta, float).reshape(gen.nu, 1)
    Fbar = gen.S - Delta @ gen.L
    if _clash(Fbar, gen.S):
        raise SpectraOverlap("sigma(S - Delta L) meets sigma(S)")
    return ReducedModel(Fbar, Delta, sys.C @ solve_pi(sys, gen), spectrum_clash=False)


def _check_left_inverse(P, Q, tol=1e-8):
    P, Q = np.asarray(P, float), np.asarray(Q, float)
    if P.shape[0] != Q.shape[1] or _rel_norm(P @ Q - np.eye(P.shape[0])) > tol:
        raise RankDeficient("P Q is not the identity")


def surrogate_generator(gen, P, Q):
    """Order-r generator ``(P S Q, L Q)``; requires ``P Q = I``."""
    _check_left_inverse(P, Q)
    return SignalGenerator(P @ gen.S @ Q, gen.L @ Q, P @ gen.omega0)


def project_model(model, P, Q):
    """``(P F Q, P G, H Q)`` for an order-nu model."""
    _check_left_inverse(P, Q)
    return ReducedModel(P @ model.F @ Q, P @ model.G, model.H @ Q)


def dual_path_model(sys, gen, params):
    """Family member assembled through the reduced generator.

    ``F = Sbar - P Delta Lbar``, ``G = P Delta`` and ``H = C Pibar`` where
    ``A Pibar + B Lbar = Pibar Sbar``. ``F`` and ``G`` agree with
    :func:`assemble_family`; ``H`` does in general not.
    """
    P, Q, Delta = params.P, params.Q, params.Delta
    red = surrogate_generator(gen, P, Q)
    F = red.S - P @ Delta @ red.L
    Pibar = solve_sylvester(sys.A, sys.B, red.L, red.S)
    return ReducedModel(F, P @ Delta, sys.C @ Pibar, params, _clash(F, gen.S))


def is_controllable(F, G, tol=1e-10):
    """PBH controllability of ``(F, G)``."""
    F, G = np.asarray(F, float), np.asarray(G, float)
    return is_observable(F.T, G.T, tol)


EIGENBASIS_MAX_COND = 1e6


def dominant_reduction_pipeline(sys, spec, r, gen=None, basis="auto"):
    """Order-r model keeping the r dominant eigenvalues of ``A``.

    Places ``sigma(S - Delta L)`` at the nu dominant eigenvalues of ``A``,
    takes ``P`` as a real basis of left eigenvectors for the r dominant ones
    and assembles the family member. Returns ``(model, params)``.

    ``basis`` selects the rows of ``P`` within that left-invariant subspace:
    ``"eigen"`` stacks the eigenvectors themselves, ``"orthonormal"`` uses an
    orthonormal basis of their span, and ``"auto"`` takes the eigenvectors
    unless their condition number exceeds ``EIGENBASIS_MAX_COND``. Different
    bases give similar models.
    """
    if gen is None:
        gen = build_generator(spec)
    nu = gen.nu
    if nu > sys.n:
        raise ValueError(f"nu = {nu} exceeds the state dimension {sys.n}")
    if nu < 2 * r:
        warnings.warn(f"nu = {nu} < 2r = {2 * r}; fewer moments than parameters", stacklevel=2)
    targets = dominant_eigenvalues(sys.eigenvalues(), nu)
    Delta = pole_place_siso(gen.S, gen.L, targets)
    M = gen.S - Delta @ gen.L
    if basis not in ("auto", "eigen", "orthonormal"):
        raise ValueError(f"unknown basis {basis!r}")
    P = None
    if basis != "orthonormal":
        P, _ = real_left_eigenbasis(M, r, eigenvalues=targets)
        if basis == "auto" and np.linalg.cond(P) > EIGENBASIS_MAX_COND:
            P = None
    if P is None:
        P = output_injection_basis(gen.S, gen.L, dominant_eigenvalues(targets, r))
    T = build_canonical_T(gen).T
    params = ReductionParams(P, Delta, T)
    return assemble_family(sys, gen, params), params

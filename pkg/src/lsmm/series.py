"""Power-series steady states and the nonlinear least-squares family."""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import (
    DegreeOverflow,
    EmptySampleSet,
    NotAdmissible,
    OrderExceedsDegree,
    Resonance,
)
from .linalg import dual_norm_row, solve_sylvester
from .linear import ReductionParams, admissibility_report
from .generator import first_resonance
from .poly import MonomialBasis, PolyMap, _count

__all__ = [
    "PolyVectorField",
    "NonlinearReducedModel",
    "lie_matrix",
    "solve_pde_series",
    "pde_residual",
    "assemble_nonlinear_family",
    "truncate_output",
    "nonlinear_error_bound",
    "moment_matching_on_manifold_check",
    "sample_ball",
]


class PolyVectorField:
    """``x' = f(x, u)`` with ``f`` a polynomial map of ``(x, u)``; input arity 1.

    The last input of ``poly`` is ``u``.
    """

    def __init__(self, poly):
        if poly.num_inputs != poly.num_outputs + 1:
            raise ValueError("field must map (x, u) in R^(n+1) to R^n")
        if np.any(poly.constant_term() != 0):
            raise ValueError("field must vanish at the origin")
        self.poly = poly

    @classmethod
    def linear(cls, A, B, degree=1):
        A = np.atleast_2d(np.asarray(A, float))
        B = np.asarray(B, float).reshape(A.shape[0], 1)
        return cls(PolyMap.from_linear(np.hstack([A, B]), degree))

    @property
    def n(self):
        return self.poly.num_outputs

    @property
    def degree(self):
        return self.poly.max_degree

    def jacobians(self):
        """``(A, B)``: Jacobians at the origin."""
        lin = self.poly.linear_part()
        return lin[:, :-1], lin[:, -1:]

    def nonlinear_part(self):
        p = self.poly.copy()
        p.coeffs[:, p.basis.degree_slice(1)] = 0.0
        return p

    def __call__(self, x, u):
        z = np.concatenate([np.ravel(x), np.atleast_1d(u)])
        return self.poly(z)


@dataclass
class NonlinearReducedModel:
    """``xi' = F_lin xi + G_lin v`` with polynomial output ``psi = kappa(xi)``."""

    F_lin: np.ndarray
    G_lin: np.ndarray
    kappa: PolyMap
    provenance: ReductionParams = None
    pi: PolyMap = None
    mu: PolyMap = None

    @property
    def r(self):
        return self.F_lin.shape[0]

    @property
    def degree(self):
        return self.kappa.max_degree


def lie_matrix(S, k):
    """Matrix ``D`` with ``d/dt m(w) = D m(w)`` along ``w' = S w`` for the
    degree-k monomials ``m``; ``D_1 = S``."""
    S = np.asarray(S, float)
    nu = S.shape[0]
    basis = MonomialBasis.get(nu, k)
    sl = basis.degree_slice(k)
    exps = basis.exponents[sl]
    off = sl.start
    D = np.zeros((len(exps), len(exps)))
    for a, alpha in enumerate(exps):
        for j in np.nonzero(alpha)[0]:
            for l in np.nonzero(S[j])[0]:
                beta = alpha.copy()
                beta[j] -= 1
                beta[l] += 1
                D[a, basis.index[tuple(beta)] - off] += alpha[j] * S[j, l]
    return D


def _check_cap(nu, d, n, max_monomials):
    count = _count(nu, d)
    if count > max_monomials:
        raise DegreeOverflow(f"{count} monomials in {nu} variables up to degree {d}")
    if _count(n + 1, d) > max_monomials:
        raise DegreeOverflow(f"field basis exceeds {max_monomials} monomials")


def solve_pde_series(field, h, gen, d, max_monomials=20000, tol=1e-8):
    """Degree-d Taylor solution of ``f(pi(w), L w) = (d pi / dw) S w``.

    Returns ``(pi, mu)`` with ``mu = h o pi``. Each homogeneous degree k is
    a Sylvester equation ``A Pi_k + R_k = Pi_k D_k`` whose right side only
    involves lower degrees; it is uniquely solvable exactly when
    ``sigma(A)`` misses ``sigma^k(S)``.
    """
    A, B = field.jacobians()
    nu, n = gen.nu, field.n
    _check_cap(nu, d, n, max_monomials)
    k_res = first_resonance(np.linalg.eigvals(A), np.linalg.eigvals(gen.S), d, tol)
    if k_res is not None:
        raise Resonance(k_res)

    basis = MonomialBasis.get(nu, d)
    pi = PolyMap(nu, n, d)
    fnl = field.nonlinear_part()
    inputs = PolyMap(nu, n + 1, d)
    inputs.coeffs[n, basis.degree_slice(1)] = gen.L.ravel()
    for k in range(1, d + 1):
        sl = basis.degree_slice(k)
        if k == 1:
            R = B @ gen.L
        else:
            inputs.coeffs[:n] = pi.coeffs
            R = fnl.compose(inputs, d).coeffs[:, sl]
        D = gen.S if k == 1 else lie_matrix(gen.S, k)
        pi.coeffs[:, sl] = solve_sylvester(A, R, np.eye(R.shape[1]), D, check_spectra=False)
    mu = h.compose(pi, d)
    return pi, mu


def pde_residual(field, pi, gen):
    """Coefficients of ``f(pi(w), L w) - (d pi / dw) S w`` through degree d."""
    d = pi.max_degree
    n, nu = field.n, gen.nu
    inputs = PolyMap(nu, n + 1, d)
    inputs.coeffs[:n] = pi.coeffs
    inputs.coeffs[n, inputs.basis.degree_slice(1)] = gen.L.ravel()
    lhs = field.poly.compose(inputs, d).coeffs
    rhs = np.zeros_like(lhs)
    for k in range(1, d + 1):
        sl = pi.basis.degree_slice(k)
        D = gen.S if k == 1 else lie_matrix(gen.S, k)
        rhs[:, sl] = pi.coeffs[:, sl] @ D
    return lhs - rhs


def assemble_nonlinear_family(field, h, gen, P, Delta, T, d, check=True):
    """Reduced model with ``F = P (S - Delta L) Q``, ``G = P Delta`` and
    ``kappa(xi) = h(pi(Q xi))`` truncated at degree d."""
    params = ReductionParams(P, Delta, T)
    if check:
        for cond, (ok, detail) in admissibility_report(gen, params).items():
            if not ok:
                raise NotAdmissible(cond, detail)
    F = params.P @ (gen.S - params.Delta @ gen.L) @ params.Q
    k_res = first_resonance(np.linalg.eigvals(F), np.linalg.eigvals(gen.S), d)
    if k_res is not None:
        raise Resonance(k_res)
    pi, mu = solve_pde_series(field, h, gen, d)
    kappa = mu.compose(PolyMap.from_linear(params.Q, d), d)
    return NonlinearReducedModel(F, params.P @ params.Delta, kappa, params, pi, mu)


def truncate_output(model, order, xi):
    """``kappa(xi)`` keeping monomials of total degree at most ``order``."""
    if order > model.degree:
        raise OrderExceedsDegree(f"order {order} exceeds model degree {model.degree}")
    return model.kappa.truncate(order)(xi)


def nonlinear_error_bound(mu, mu_hat, samples):
    """Largest ``|| d mu/dw - d mu_hat/dw ||`` over the samples.

    A sampled lower estimate of the supremum over the set the samples
    are drawn from.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise EmptySampleSet("no samples")
    if samples.shape[1] != mu.num_inputs:
        samples = samples.reshape(-1, mu.num_inputs)
    diff = mu - mu_hat
    return max(dual_norm_row(diff.jacobian(w)) for w in samples)


def moment_matching_on_manifold_check(model, mu, Q, samples, tol=1e-9):
    """True iff ``kappa(xi)`` equals ``mu(Q xi)`` at every sample."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    Q = np.asarray(Q, float)
    d = min(model.kappa.max_degree, mu.max_degree)
    lhs = model.kappa.truncate(d)(samples)
    rhs = mu.truncate(d)(samples @ Q.T)
    return bool(np.all(np.abs(lhs - rhs) <= tol))


def sample_ball(dim, radius, count=256, seed=0):
    """Scrambled Sobol points mapped into the Euclidean ball of ``radius``."""
    if count <= 0:
        raise EmptySampleSet("count must be positive")
    u = qmc.Sobol(dim + 1, scramble=True, seed=seed).random(count)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    z = ndtri(u[:, :dim])
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    rad = radius * u[:, dim] ** (1.0 / dim)
    return z * rad[:, None]

"""Truncated multivariate polynomial maps over a graded monomial basis."""

import itertools
from functools import lru_cache

import numpy as np

from .errors import DegreeOverflow, NonFinite

__all__ = ["MonomialBasis", "PolyMap", "MAX_MONOMIALS"]

MAX_MONOMIALS = 20000


def _count(nvars, degree):
    from math import comb

    return comb(nvars + degree, degree)


class MonomialBasis:
    """All monomials of total degree ``0..degree`` in ``nvars`` variables.

    Ordered by degree, and within a degree in ``combinations_with_replacement``
    order of the variable indices. Use :meth:`get` for cached instances.
    """

    def __init__(self, nvars, degree):
        if _count(nvars, degree) > MAX_MONOMIALS:
            raise DegreeOverflow(
                f"{_count(nvars, degree)} monomials in {nvars} variables up to degree {degree}"
            )
        self.nvars = nvars
        self.degree = degree
        exps, starts = [], []
        for k in range(degree + 1):
            starts.append(len(exps))
            for combo in itertools.combinations_with_replacement(range(nvars), k):
                e = [0] * nvars
                for v in combo:
                    e[v] += 1
                exps.append(tuple(e))
        starts.append(len(exps))
        self.exponents = np.array(exps, dtype=int).reshape(len(exps), nvars)
        self.index = {e: i for i, e in enumerate(exps)}
        self._starts = starts
        self._table = None

    @staticmethod
    @lru_cache(maxsize=64)
    def get(nvars, degree):
        return MonomialBasis(nvars, degree)

    def __len__(self):
        return len(self.exponents)

    def degree_slice(self, k):
        return slice(self._starts[k], self._starts[k + 1])

    def product_table(self):
        """``table[i, j]`` is the index of monomial i times monomial j, or -1."""
        if self._table is None:
            N = len(self)
            deg = self.exponents.sum(axis=1)
            table = -np.ones((N, N), dtype=int)
            for i in range(N):
                for j in np.nonzero(deg + deg[i] <= self.degree)[0]:
                    table[i, j] = self.index[tuple(self.exponents[i] + self.exponents[j])]
            self._table = table
        return self._table

    def multiply(self, a, b):
        """Product of two scalar polynomials given as coefficient vectors."""
        table = self.product_table()
        out = np.zeros(len(self), dtype=np.result_type(a, b))
        for i in np.nonzero(a)[0]:
            idx = table[i]
            ok = idx >= 0
            np.add.at(out, idx[ok], a[i] * b[ok])
        return out

    def monomials(self, x):
        """Monomial values at ``x`` of shape ``(nvars,)`` or ``(samples, nvars)``."""
        x = np.asarray(x, dtype=float)
        return np.prod(x[..., None, :] ** self.exponents, axis=-1)


class PolyMap:
    """Polynomial map R^num_inputs -> R^num_outputs truncated at ``max_degree``.

    Coefficients live in a dense ``(num_outputs, len(basis))`` array; the
    constructor also accepts a dict ``{(output, alpha): value}``.
    """

    def __init__(self, num_inputs, num_outputs, max_degree, coefficients=None):
        self.num_inputs = int(num_inputs)
        self.num_outputs = int(num_outputs)
        self.max_degree = int(max_degree)
        self.basis = MonomialBasis.get(self.num_inputs, self.max_degree)
        N = len(self.basis)
        if coefficients is None:
            C = np.zeros((self.num_outputs, N))
        elif isinstance(coefficients, dict):
            C = np.zeros((self.num_outputs, N))
            for (out, alpha), val in coefficients.items():
                alpha = tuple(int(a) for a in alpha)
                if len(alpha) != self.num_inputs or sum(alpha) > self.max_degree or min(alpha) < 0:
                    raise ValueError(f"invalid monomial {alpha}")
                C[out, self.basis.index[alpha]] += val
        else:
            C = np.array(coefficients, dtype=float).reshape(self.num_outputs, N)
        if not np.all(np.isfinite(C)):
            raise NonFinite("non-finite polynomial coefficient")
        self.coeffs = C
        self._sparse = None

    @classmethod
    def from_linear(cls, M, max_degree=1):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        p = cls(M.shape[1], M.shape[0], max_degree)
        p.coeffs[:, p.basis.degree_slice(1)] = M
        return p

    def copy(self):
        return PolyMap(self.num_inputs, self.num_outputs, self.max_degree, self.coeffs.copy())

    @property
    def coefficients(self):
        """Nonzero coefficients as ``{(output, alpha): value}``."""
        out = {}
        for o, i in zip(*np.nonzero(self.coeffs)):
            out[(int(o), tuple(int(a) for a in self.basis.exponents[i]))] = float(self.coeffs[o, i])
        return out

    def homogeneous(self, k):
        return self.coeffs[:, self.basis.degree_slice(k)]

    def linear_part(self):
        return self.homogeneous(1).copy()

    def constant_term(self):
        return self.coeffs[:, 0].copy()

    def truncate(self, order):
        """Drop every monomial of total degree above ``order``."""
        order = min(order, self.max_degree)
        p = PolyMap(self.num_inputs, self.num_outputs, order)
        p.coeffs[:] = self.coeffs[:, : len(p.basis)]
        return p

    def lift(self, degree):
        """Same polynomial stored with a larger truncation degree."""
        p = PolyMap(self.num_inputs, self.num_outputs, degree)
        n = min(len(p.basis), len(self.basis))
        p.coeffs[:, :n] = self.coeffs[:, :n]
        return p

    def _aligned(self, other):
        d = max(self.max_degree, other.max_degree)
        return self.lift(d), other.lift(d)

    def __add__(self, other):
        a, b = self._aligned(other)
        return PolyMap(a.num_inputs, a.num_outputs, a.max_degree, a.coeffs + b.coeffs)

    def __sub__(self, other):
        a, b = self._aligned(other)
        return PolyMap(a.num_inputs, a.num_outputs, a.max_degree, a.coeffs - b.coeffs)

    def left_multiply(self, M):
        """The map ``x -> M p(x)``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return PolyMap(self.num_inputs, M.shape[0], self.max_degree, M @ self.coeffs)

    def select(self, rows):
        rows = np.atleast_1d(rows)
        return PolyMap(self.num_inputs, rows.size, self.max_degree, self.coeffs[rows])

    def _nonzero_terms(self):
        if self._sparse is None:
            cols = np.nonzero(np.any(self.coeffs != 0, axis=0))[0]
            self._sparse = (self.basis.exponents[cols], self.coeffs[:, cols])
        return self._sparse

    def point_evaluator(self):
        """Fast closure evaluating the map at a single point.

        Each monomial is a product of gathered variables, padded with a
        trailing 1, which avoids elementwise powers in inner loops.
        """
        E, C = self._nonzero_terms()
        width = max(int(E.sum(axis=1).max(initial=0)), 1)
        idx = np.full((E.shape[0], width), self.num_inputs)
        for m, e in enumerate(E):
            vars_ = np.repeat(np.arange(self.num_inputs), e)
            idx[m, : vars_.size] = vars_
        ext = np.ones(self.num_inputs + 1)

        def evaluate(x):
            ext[:-1] = x
            return C @ np.prod(ext[idx], axis=1)

        return evaluate

    def __call__(self, x):
        """Evaluate at ``x`` of shape ``(num_inputs,)`` or ``(samples, num_inputs)``."""
        E, C = self._nonzero_terms()
        x = np.asarray(x, dtype=float)
        mons = np.prod(x[..., None, :] ** E, axis=-1)
        return mons @ C.T

    def jacobian(self, x):
        """Exact Jacobian ``(num_outputs, num_inputs)`` at a single point."""
        E, C = self._nonzero_terms()
        x = np.asarray(x, dtype=float).ravel()
        J = np.zeros((self.num_outputs, self.num_inputs))
        for j in range(self.num_inputs):
            mask = E[:, j] > 0
            if not mask.any():
                continue
            Ej = E[mask].copy()
            fac = Ej[:, j].astype(float)
            Ej[:, j] -= 1
            J[:, j] = C[:, mask] @ (fac * np.prod(x ** Ej, axis=1))
        return J

    def compose(self, inner, degree=None):
        """``self(inner(z))`` truncated at ``degree`` (default: own degree).

        ``inner`` must have ``num_outputs == self.num_inputs``.
        """
        if inner.num_outputs != self.num_inputs:
            raise ValueError("dimension mismatch in composition")
        d = self.max_degree if degree is None else degree
        ring = MonomialBasis.get(inner.num_inputs, d)
        N = len(ring)
        comps = inner.lift(d).coeffs if inner.max_degree < d else inner.coeffs[:, :N]
        cache = {(0,) * self.num_inputs: np.eye(1, N).ravel()}

        def value(alpha):
            if alpha in cache:
                return cache[alpha]
            j = max(i for i, a in enumerate(alpha) if a)
            prev = list(alpha)
            prev[j] -= 1
            v = ring.multiply(value(tuple(prev)), comps[j])
            cache[alpha] = v
            return v

        out = np.zeros((self.num_outputs, N))
        for i in np.nonzero(np.any(self.coeffs != 0, axis=0))[0]:
            alpha = tuple(int(a) for a in self.basis.exponents[i])
            out += np.outer(self.coeffs[:, i], value(alpha))
        return PolyMap(inner.num_inputs, self.num_outputs, d, out)

    def is_odd(self, tol=0.0):
        deg = self.basis.exponents.sum(axis=1)
        return bool(np.all(np.abs(self.coeffs[:, deg % 2 == 0]) <= tol))

    def __repr__(self):
        return (
            f"PolyMap(num_inputs={self.num_inputs}, num_outputs={self.num_outputs}, "
            f"max_degree={self.max_degree}, terms={np.count_nonzero(self.coeffs)})"
        )

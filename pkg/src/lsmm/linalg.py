"""Dense linear-algebra kernels: Sylvester solves, spectra, SISO pole placement."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConvergenceFailure,
    DegenerateEigenvalue,
    NonFinite,
    NotObservable,
    PairSplit,
    SpectraOverlap,
    TargetsNotConjugateClosed,
)

__all__ = [
    "Spectrum",
    "spectrum",
    "disjointness_tol",
    "spectra_distance",
    "solve_sylvester",
    "eigen_decompose",
    "dominance_order",
    "dominant_eigenvalues",
    "pole_place_siso",
    "observability_matrix",
    "is_observable",
    "dual_norm_row",
    "is_non_derogatory",
    "real_left_eigenbasis",
    "output_injection_basis",
]

# Kronecker systems above this many unknowns go to Bartels-Stewart.
KRON_MAX_UNKNOWNS = 1600


@dataclass(frozen=True)
class Spectrum:
    """Distinct eigenvalues with algebraic multiplicities."""

    eigenvalues: np.ndarray
    multiplicities: np.ndarray

    def __len__(self):
        return int(np.sum(self.multiplicities))

    def expanded(self):
        """Eigenvalues repeated according to multiplicity."""
        return np.repeat(self.eigenvalues, self.multiplicities)


def _as_matrix(M, name="matrix"):
    M = np.atleast_2d(np.asarray(M))
    if M.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional")
    if not np.all(np.isfinite(M)):
        raise NonFinite(f"{name} has non-finite entries")
    return M


def _values(x):
    if isinstance(x, Spectrum):
        return x.expanded()
    return np.atleast_1d(np.asarray(x, dtype=complex)).ravel()


def disjointness_tol(*spectra):
    """Absolute tolerance 1e-8 (1 + max |lambda|) over the given spectra."""
    vals = [np.abs(_values(s)) for s in spectra if len(_values(s))]
    top = max((v.max() for v in vals), default=0.0)
    return 1e-8 * (1.0 + top)


def spectra_distance(a, b):
    """Smallest pairwise distance between two eigenvalue sets."""
    a, b = _values(a), _values(b)
    if a.size == 0 or b.size == 0:
        return np.inf
    return float(np.min(np.abs(a[:, None] - b[None, :])))


def _cluster(values, tol):
    """Group numerically equal eigenvalues; returns (centers, counts)."""
    values = list(values)
    centers, counts = [], []
    while values:
        v = values.pop(0)
        group = [v] + [w for w in values if abs(w - v) <= tol]
        values = [w for w in values if abs(w - v) > tol]
        centers.append(np.mean(group))
        counts.append(len(group))
    return np.array(centers, dtype=complex), np.array(counts, dtype=int)


def spectrum(M, tol=None):
    """Spectrum of a square matrix with multiplicities.

    Eigenvalues closer than ``tol`` (default ``1e-6 (1 + ||M||)``) are merged;
    defective eigenvalues are only computed to about ``eps**(1/k)``.
    """
    M = _as_matrix(M)
    vals = sla.eigvals(M)
    if tol is None:
        tol = 1e-6 * (1.0 + np.linalg.norm(M, 2))
    centers, counts = _cluster(vals, tol)
    # snap real eigenvalues of real matrices onto the axis
    if np.isrealobj(M):
        centers = np.where(np.abs(centers.imag) <= tol, centers.real + 0j, centers)
    return Spectrum(centers, counts)


def solve_sylvester(A, B, L, S, check_spectra=True):
    """Solve ``A X + B L = X S`` for ``X``.

    Parameters
    ----------
    A : (n, n) array
    B : (n, m) array
    L : (m, k) array
    S : (k, k) array
    check_spectra : bool
        Verify that sigma(A) and sigma(S) are disjoint before solving.

    Returns
    -------
    X : (n, k) array
        Real whenever all inputs are real.

    Triangular ``A`` (cascades) is handled by substitution one row of
    ``X`` at a time, which keeps rows of very different magnitude accurate
    relative to their own size. Otherwise small problems go through the
    Kronecker form ``(I kron A - S^T kron I) vec X = -vec(B L)`` and larger
    ones through Bartels-Stewart.
    """
    A, B, L, S = (_as_matrix(M, nm) for M, nm in zip((A, B, L, S), "ABLS"))
    n, k = A.shape[0], S.shape[0]
    if A.shape != (n, n) or S.shape != (k, k):
        raise ValueError("A and S must be square")
    if B.shape[0] != n or L.shape[1] != k or B.shape[1] != L.shape[0]:
        raise ValueError("inconsistent dimensions for A X + B L = X S")

    if check_spectra:
        sa, ss = sla.eigvals(A), sla.eigvals(S)
        if spectra_distance(sa, ss) < disjointness_tol(sa, ss):
            raise SpectraOverlap("sigma(A) and sigma(S) intersect")

    rhs = -(B @ L)
    lower, upper = not np.any(np.triu(A, 1)), not np.any(np.tril(A, -1))
    if (lower or upper) and n > 1:
        X = _sylvester_triangular(A, S, rhs, lower)
    elif n * k <= KRON_MAX_UNKNOWNS:
        K = np.kron(np.eye(k), A) - np.kron(S.T, np.eye(n))
        try:
            x = np.linalg.solve(K, rhs.reshape(-1, order="F"))
        except np.linalg.LinAlgError as exc:
            raise SpectraOverlap("singular Sylvester operator") from exc
        X = x.reshape((n, k), order="F")
    else:
        X = sla.solve_sylvester(A, -S, rhs)
    if not np.all(np.isfinite(X)):
        raise SpectraOverlap("Sylvester solution is not finite")
    return X


def _sylvester_triangular(A, S, rhs, lower):
    n, k = A.shape[0], S.shape[0]
    dtype = np.result_type(A, S, rhs, float)
    X = np.zeros((n, k), dtype=dtype)
    order = range(n) if lower else range(n - 1, -1, -1)
    eye = np.eye(k)
    for i in order:
        # a_ii x_i - x_i S = rhs_i - sum_{j != i} a_ij x_j
        b = rhs[i] - A[i] @ X
        try:
            X[i] = np.linalg.solve((A[i, i] * eye - S).T, b)
        except np.linalg.LinAlgError as exc:
            raise SpectraOverlap("singular Sylvester operator") from exc
    return X


def _pair_items(vals, tol):
    """Split eigenvalues into real singletons and conjugate pairs.

    Returns a list of tuples ``(real, |imag|, members)`` where members is
    ``(lam,)`` or ``(a + ib, a - ib)`` with ``b > 0``.
    """
    vals = list(np.asarray(vals, dtype=complex))
    items = []
    while vals:
        v = vals.pop(0)
        if abs(v.imag) <= tol:
            items.append((v.real, 0.0, (complex(v.real, 0.0),)))
            continue
        dist = [abs(w - np.conj(v)) for w in vals]
        j = int(np.argmin(dist)) if dist else -1
        if j < 0 or dist[j] > tol:
            raise TargetsNotConjugateClosed(f"eigenvalue {v} has no conjugate partner")
        w = vals.pop(j)
        a = 0.5 * (v.real + w.real)
        b = 0.5 * (abs(v.imag) + abs(w.imag))
        items.append((a, b, (complex(a, b), complex(a, -b))))
    return items


def dominance_order(vals, tol=None):
    """Sort eigenvalues by dominance.

    Descending real part, ties broken by ascending ``|Im|``, with each
    conjugate pair adjacent (positive imaginary part first).
    """
    vals = _values(vals)
    if tol is None:
        tol = disjointness_tol(vals)
    items = _pair_items(vals, tol)
    items.sort(key=lambda it: (-it[0], it[1]))
    return np.array([m for it in items for m in it[2]], dtype=complex)


def dominant_eigenvalues(vals, count, tol=None):
    """The ``count`` most dominant eigenvalues; raises PairSplit at a pair cut."""
    ordered = dominance_order(vals, tol)
    if count > ordered.size:
        raise ValueError(f"requested {count} eigenvalues of {ordered.size}")
    if 0 < count < ordered.size:
        last, nxt = ordered[count - 1], ordered[count]
        if last.imag > 0 and np.isclose(nxt, np.conj(last)):
            raise PairSplit(f"cut at {count} splits the pair {last}, {nxt}")
    return ordered[:count]


def eigen_decompose(M):
    """Eigenvalues with right and left eigenvectors, in dominance order.

    Returns ``(Spectrum, V, W)`` where ``M V[:, i] = lam_i V[:, i]`` and
    ``W[:, i]^T M = lam_i W[:, i]^T``; eigenvectors have unit 2-norm.
    """
    M = _as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    try:
        lam, vl, vr = sla.eig(M, left=True, right=True)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    # scipy returns vl with vl^H M = lam vl^H
    wl = np.conj(vl)
    tol = disjointness_tol(lam)
    try:
        order = dominance_order(lam, tol)
    except TargetsNotConjugateClosed:
        order = lam[np.lexsort((np.abs(lam.imag), -lam.real))]
    idx = []
    used = np.zeros(lam.size, dtype=bool)
    for v in order:
        d = np.where(used, np.inf, np.abs(lam - v))
        j = int(np.argmin(d))
        used[j] = True
        idx.append(j)
    idx = np.array(idx)
    lam, V, W = lam[idx], vr[:, idx], wl[:, idx]
    V = V / np.linalg.norm(V, axis=0)
    W = W / np.linalg.norm(W, axis=0)
    centers, counts = _cluster(lam, 1e-6 * (1.0 + np.abs(lam).max(initial=0.0)))
    return Spectrum(centers, counts), V, W


def observability_matrix(S, L):
    """Rows ``L S^k`` for k = 0..nu-1."""
    S = _as_matrix(S, "S")
    L = _as_matrix(L, "L")
    rows = [L]
    for _ in range(S.shape[0] - 1):
        rows.append(rows[-1] @ S)
    return np.vstack(rows)


def is_observable(S, L, tol=1e-10):
    """PBH test: ``[S - lam I; L]`` has full column rank at every eigenvalue.

    Far better conditioned than the rank of the observability matrix when
    the spectrum of ``S`` spans many decades.
    """
    S = _as_matrix(S, "S")
    L = _as_matrix(L, "L")
    nu = S.shape[0]
    scale = max(1.0, np.linalg.norm(S, 2), np.linalg.norm(L, 2))
    for lam in sla.eigvals(S):
        M = np.vstack([S - lam * np.eye(nu), L])
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= tol * scale:
            return False
    return True


def dual_norm_row(v):
    """Dual of the Euclidean norm on row covectors, i.e. the 2-norm."""
    return float(np.linalg.norm(np.asarray(v).ravel()))


def is_non_derogatory(S, tol=1e-8):
    """True iff every distinct eigenvalue has geometric multiplicity one.

    Geometric multiplicity is ``nu - rank(S - lam I)`` with singular values
    below ``tol * max(1, ||S||)`` counted as zero.
    """
    S = _as_matrix(S, "S")
    nu = S.shape[0]
    spec = spectrum(S)
    scale = max(1.0, np.linalg.norm(S, 2))
    for lam in spec.eigenvalues:
        sv = np.linalg.svd(S - lam * np.eye(nu), compute_uv=False)
        if np.sum(sv <= tol * scale) > 1:
            return False
    return True


def _check_targets(targets, nu):
    t = _values(targets)
    if t.size != nu:
        raise ValueError(f"expected {nu} target eigenvalues, got {t.size}")
    tol = disjointness_tol(t)
    for v in t:
        if abs(v.imag) > tol:
            if np.sum(np.abs(t - np.conj(v)) <= tol) != np.sum(np.abs(t - v) <= tol):
                raise TargetsNotConjugateClosed(f"{v} lacks a conjugate partner")
    return t


def _place_modal(S, L, targets):
    """Gain from the modal expansion of det(sI - S + Delta L).

    With ``S = V diag(lam) V^-1``, ``d = V^-1 Delta`` and ``l = L V`` the
    characteristic polynomial is ``prod(s - lam_i) (1 + sum l_i d_i / (s - lam_i))``;
    matching it at ``s = lam_i`` gives ``d_i`` in closed form.
    """
    lam, V = sla.eig(S)
    ell = (L @ V).ravel()
    nu = lam.size
    d = np.empty(nu, dtype=complex)
    for i in range(nu):
        others = np.delete(lam, i)
        num = lam[i] - targets
        # interleave factors to keep the running product in range
        val = num[-1] / ell[i]
        for a, b in zip(num[:-1], lam[i] - others):
            val *= a / b
        d[i] = val
    return V @ d


def _place_ackermann(S, L, targets):
    coeffs = np.real_if_close(np.poly(targets), tol=1e6)
    nu = S.shape[0]
    phi = np.zeros_like(S, dtype=complex if np.iscomplexobj(coeffs) else float)
    for c in coeffs:
        phi = phi @ S + c * np.eye(nu)
    O = observability_matrix(S, L)
    e = np.zeros(nu)
    e[-1] = 1.0
    return phi @ np.linalg.solve(O, e)


def _refine_placement(S, L, Delta, targets):
    """One correction step on the conditions ``L (S - mu I)^-1 Delta = 1``.

    Each condition says ``mu`` is an eigenvalue of ``S - Delta L``.
    """
    nu = S.shape[0]
    rows = np.array([np.linalg.solve((S - mu * np.eye(nu)).T, L.ravel()) for mu in targets])
    resid = 1.0 - rows @ Delta
    Ar = np.vstack([rows.real, rows.imag])
    br = np.concatenate([resid.real, resid.imag])
    corr = np.linalg.lstsq(Ar, br, rcond=None)[0]
    return Delta + corr


def _min_gap(vals):
    gaps = np.abs(vals[:, None] - vals[None, :])
    np.fill_diagonal(gaps, np.inf)
    return gaps.min() if vals.size > 1 else np.inf


def pole_place_siso(S, L, targets):
    """Output-injection gain ``Delta`` with ``sigma(S - Delta L) = targets``.

    Parameters
    ----------
    S : (nu, nu) array
    L : (1, nu) array
    targets : array_like of nu complex values, closed under conjugation

    Returns
    -------
    Delta : (nu, 1) real array
        Unique for single-output pairs.

    Diagonalizable ``S`` with distinct eigenvalues uses the modal closed form
    followed by a residual correction; otherwise the dual Ackermann formula.
    """
    S = _as_matrix(S, "S").astype(float)
    L = _as_matrix(L, "L").astype(float)
    nu = S.shape[0]
    if L.shape != (1, nu):
        raise ValueError("L must be 1 x nu")
    t = _check_targets(targets, nu)
    if not is_observable(S, L):
        raise NotObservable("(S, L) is not observable")

    lam, V = sla.eig(S)
    distinct = _min_gap(lam) > 1e-6 * (1.0 + np.abs(lam).max())
    if distinct and np.linalg.cond(V) < 1e8:
        Delta = _place_modal(S, L, t)
        far = spectra_distance(t, lam) > 1e-6 * (1.0 + np.abs(lam).max())
        t_distinct = _min_gap(t) > 1e-8 * (1.0 + np.abs(t).max())
        if far and t_distinct:
            Delta = _refine_placement(S, L, Delta, t)
    else:
        Delta = _place_ackermann(S, L, t)
    Delta = np.asarray(Delta)
    if np.iscomplexobj(Delta):
        if np.abs(Delta.imag).max() > 1e-6 * max(1.0, np.abs(Delta).max()):
            raise ConvergenceFailure("placement produced a complex gain")
        Delta = Delta.real
    return Delta.reshape(nu, 1)


def _left_null_vector(M, mu):
    """Unit left null vector of ``M - mu I`` from its smallest singular triplet."""
    nu = M.shape[0]
    _, _, vh = np.linalg.svd((M - mu * np.eye(nu)).T)
    w = vh[-1].conj()
    return w / np.linalg.norm(w)


def real_left_eigenbasis(M, count, eigenvalues=None):
    """Real basis of left eigenvectors for the ``count`` dominant eigenvalues.

    Parameters
    ----------
    M : (nu, nu) real array
    count : int
    eigenvalues : array_like, optional
        The spectrum of ``M`` when it is known more accurately than an
        eigensolver can deliver it, e.g. after pole placement. Left
        eigenvectors are then taken as null vectors of ``(M - mu I)^T``.

    Returns
    -------
    P : (count, nu) array
    F_block : (count, count) array
        Satisfies ``P M = F_block P``. A real eigenvalue contributes one row;
        a pair ``a +- ib`` (``b > 0``) contributes ``[Re w; Im w]`` with
        ``w^T M = (a - ib) w^T``, giving the block ``[[a, b], [-b, a]]``.
    """
    M = _as_matrix(M, "M").astype(float)
    nu = M.shape[0]
    if eigenvalues is None:
        spec, _, _ = eigen_decompose(M)
        vals = spec.expanded()
    else:
        vals = _values(eigenvalues)
    tol = disjointness_tol(vals)
    chosen = dominant_eigenvalues(vals, count, tol)
    # the first excluded item must be distinguishable from the last chosen one
    ordered = dominance_order(vals, tol)
    for i, v in enumerate(chosen):
        if np.sum(np.abs(vals - v) <= 1e-6 * (1.0 + abs(v))) > 1:
            raise DegenerateEigenvalue(f"eigenvalue {v} is repeated")
    if 0 < count < ordered.size:
        a, b = ordered[count - 1], ordered[count]
        if abs(a.real - b.real) <= tol and abs(abs(a.imag) - abs(b.imag)) <= tol and not np.isclose(b, np.conj(a)):
            raise DegenerateEigenvalue("dominance order is ambiguous at the cut")

    rows, blocks = [], []
    i = 0
    while i < count:
        v = chosen[i]
        if v.imag > 0:
            a, b = v.real, v.imag
            w = _left_null_vector(M, complex(a, -b))
            # fix the phase so that Re w and Im w are orthogonal
            z = np.sum(w * w)
            w = w * np.exp(-0.5j * np.angle(z))
            rows += [w.real, w.imag]
            blocks.append(np.array([[a, b], [-b, a]]))
            i += 2
        else:
            w = _left_null_vector(M, v.real)
            w = np.real(w * np.exp(-1j * np.angle(w[np.argmax(np.abs(w))])))
            rows.append(w / np.linalg.norm(w))
            blocks.append(np.array([[v.real]]))
            i += 1
    return np.array(rows), sla.block_diag(*blocks)


def output_injection_basis(S, L, eigenvalues):
    """Orthonormal real rows spanning the left eigenvectors of ``S - Delta L``
    for the given eigenvalues, whatever ``Delta`` placed them.

    A left eigenvector for ``mu`` is proportional to ``L (S - mu I)^-1``, so
    the span is a rational Krylov space. It is built by rational Arnoldi,
    which stays well conditioned when the eigenvectors themselves are nearly
    parallel. Conjugate pairs must be adjacent and add two rows.
    """
    S = _as_matrix(S, "S").astype(float)
    L = _as_matrix(L, "L").astype(float)
    nu = S.shape[0]
    vals = _values(eigenvalues)
    rows = []

    def append(x):
        for _ in range(2):
            for b in rows:
                x = x - (b @ x) * b
        norm = np.linalg.norm(x)
        if norm == 0.0:
            raise DegenerateEigenvalue("rational Krylov space breaks down")
        rows.append(x / norm)

    v = L.ravel().astype(complex)
    i = 0
    while i < vals.size:
        mu = vals[i]
        x = np.linalg.solve((S - mu * np.eye(nu)).T, v)
        if abs(mu.imag) > disjointness_tol(vals):
            if i + 1 >= vals.size or abs(vals[i + 1] - np.conj(mu)) > disjointness_tol(vals):
                raise PairSplit(f"{mu} is not followed by its conjugate")
            append(x.real)
            append(x.imag)
            i += 2
        else:
            append(x.real)
            i += 1
        v = rows[-1].astype(complex)
    return np.array(rows)

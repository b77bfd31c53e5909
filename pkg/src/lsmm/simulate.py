"""Time-domain simulation, r.m.s. statistics and frequency responses."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import (
    EmptyWindow,
    NonFiniteState,
    NotSkewSymmetric,
    PointInSpectrum,
    StepSizeUnderflow,
    Unstable,
)
from .linalg import disjointness_tol, spectra_distance
from .linear import ReducedModel, StateSpace, solve_P, solve_pi
from .series import NonlinearReducedModel, PolyVectorField

log = logging.getLogger(__name__)

__all__ = [
    "SimConfig",
    "Trajectory",
    "integrate_rk23",
    "simulate_interconnection",
    "rms_value",
    "estimate_gamma_rms",
    "steady_state_error_prediction",
    "steady_state_rms",
    "frequency_response",
    "default_horizon",
    "generator_solution",
    "steady_state_amplitudes",
    "compare_nonlinear",
]


@dataclass(frozen=True)
class SimConfig:
    """Integrator settings. ``t_final=None`` picks :func:`default_horizon`."""

    t_final: float = None
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    steady_state_fraction: float = 0.5
    samples: int = 4001
    max_step: float = np.inf

    def __post_init__(self):
        if not 0.0 < self.steady_state_fraction < 1.0:
            raise ValueError("steady_state_fraction must lie in (0, 1)")
        if self.rel_tol <= 0 or np.any(np.asarray(self.abs_tol) <= 0):
            raise ValueError("tolerances must be positive")
        if self.t_final is not None and not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.samples < 2:
            raise ValueError("need at least two output samples")

    def with_horizon(self, t_final):
        return SimConfig(
            t_final, self.rel_tol, self.abs_tol, self.steady_state_fraction, self.samples, self.max_step
        )


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if self.values.shape[0] != self.times.shape[0]:
            raise ValueError("times and values differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def column(self, j):
        return Trajectory(self.times, self.values[:, j], dict(self.meta))

    def window(self, start):
        mask = self.times >= start
        return Trajectory(self.times[mask], self.values[mask], dict(self.meta))


_BS_B = np.array([2.0 / 9, 1.0 / 3, 4.0 / 9])
_BS_ERR = np.array([-5.0 / 72, 1.0 / 12, 1.0 / 9, -1.0 / 8])


def _initial_step(fun, t0, y0, f0, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0, d1 = np.max(np.abs(y0) / scale), np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = fun(t0 + h0, y0 + h0 * f0)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 3)
    return min(100 * h0, h1)


def integrate_rk23(fun, x0, config, t_eval=None):
    """Adaptive Bogacki-Shampine 3(2) integration of ``x' = fun(t, x)``.

    Error control uses the max norm of the embedded error estimate scaled by
    ``abs_tol + rel_tol * |x|`` per component (``abs_tol`` may be an array).
    The solution is sampled at ``t_eval`` (default ``config.samples``
    equispaced times) by cubic Hermite interpolation on each step.
    """
    y = np.asarray(x0, dtype=float).ravel().copy()
    if not np.all(np.isfinite(y)):
        raise NonFiniteState("initial state is not finite")
    T = config.t_final
    if T is None:
        raise ValueError("t_final must be set")
    t_eval = np.linspace(0.0, T, config.samples) if t_eval is None else np.asarray(t_eval, float)
    rtol = config.rel_tol
    atol = np.broadcast_to(np.asarray(config.abs_tol, float), y.shape)
    out = np.empty((t_eval.size, y.size))
    nxt = 0
    while nxt < t_eval.size and t_eval[nxt] <= 0.0:
        out[nxt] = y
        nxt += 1

    t = 0.0
    K = np.empty((4, y.size))
    K[0] = fun(t, y)
    if not np.all(np.isfinite(K[0])):
        raise NonFiniteState("vector field is not finite at the initial state")
    nfev, steps, rejected = 1, 0, 0
    h = min(_initial_step(fun, t, y, K[0], rtol, atol), config.max_step, T)
    nfev += 1
    last_bad = False
    while t < T:
        if not h > 16 * np.spacing(abs(t)):
            if last_bad:
                raise NonFiniteState(f"state became non-finite near t = {t}")
            raise StepSizeUnderflow(f"step size underflow at t = {t}")
        if t + h > T:
            h = T - t
        K[1] = fun(t + 0.5 * h, y + (0.5 * h) * K[0])
        K[2] = fun(t + 0.75 * h, y + (0.75 * h) * K[1])
        y_new = y + h * (_BS_B @ K[:3])
        K[3] = fun(t + h, y_new)
        nfev += 3
        err = np.abs(h * (_BS_ERR @ K))
        scale = np.maximum(np.abs(y), np.abs(y_new))
        scale *= rtol
        scale += atol
        norm = (err / scale).max()
        if not np.isfinite(norm):
            last_bad = True
            rejected += 1
            h *= 0.25
            continue
        last_bad = False
        if norm > 1.0:
            rejected += 1
            h *= max(0.2, 0.9 * norm ** (-1.0 / 3))
            continue
        t_new = t + h
        if nxt < t_eval.size and t_eval[nxt] <= t_new:
            stop = np.searchsorted(t_eval, t_new, side="right")
            s = ((t_eval[nxt:stop] - t) / h)[:, None]
            # cubic Hermite written as an increment so constants stay exact
            h10 = s * (1 - s) ** 2
            h01 = s * s * (3 - 2 * s)
            h11 = s * s * (s - 1)
            out[nxt:stop] = y + h01 * (y_new - y) + h * (h10 * K[0] + h11 * K[3])
            nxt = stop
        t, y = t_new, y_new
        K[0] = K[3]
        steps += 1
        factor = 5.0 if norm == 0 else min(5.0, max(0.2, 0.9 * norm ** (-1.0 / 3)))
        h = min(h * factor, config.max_step)
    meta = {"nfev": nfev, "steps": steps, "rejected": rejected}
    return Trajectory(t_eval, out, meta)


def _dynamics(item):
    """``(dim, rhs(x, u), out(X), linear)`` for one driven system.

    ``out`` is vectorized over rows of states; ``linear`` is ``(F, G)`` when
    the state equation is linear, else None.
    """
    if isinstance(item, tuple) and isinstance(item[0], NonlinearReducedModel):
        model, order = item
        kappa = model.kappa.truncate(order)
        F, G = model.F_lin, model.G_lin.ravel()
        return F.shape[0], lambda x, u: F @ x + G * u, lambda X: kappa(X)[:, 0], (F, G)
    if isinstance(item, NonlinearReducedModel):
        return _dynamics((item, item.degree))
    if isinstance(item, tuple) and isinstance(item[0], PolyVectorField):
        fld, h = item
        n = fld.n
        ev = fld.poly.point_evaluator()
        z = np.empty(n + 1)

        def rhs(x, u):
            z[:n] = x
            z[n] = u
            return ev(z)

        return n, rhs, lambda X: h(X)[:, 0], None
    if isinstance(item, ReducedModel):
        item = item.as_state_space()
    if isinstance(item, StateSpace):
        A, B, C = item.A, item.B.ravel(), item.C.ravel()
        return item.n, lambda x, u: A @ x + B * u, lambda X: X @ C, (A, B)
    raise TypeError(f"cannot simulate {type(item).__name__}")


def _propagate_linear(F, G, S, L, omega_t, times, x0):
    """States of ``x' = F x + G L omega`` at ``times`` from exact
    matrix-exponential steps of the joint generator-system state.

    The generator part is reset to its closed-form value at every sample,
    so only the system block is propagated.
    """
    nu, n = S.shape[0], F.shape[0]
    M = np.zeros((nu + n, nu + n))
    M[:nu, :nu] = S
    M[nu:, :nu] = np.outer(G, L)
    M[nu:, nu:] = F
    X = np.empty((times.size, n))
    X[0] = x0
    cache = {}
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        key = round(dt, 12)
        if key not in cache:
            cache[key] = expm(M * dt)[nu:]
        E = cache[key]
        X[k + 1] = E[:, :nu] @ omega_t[k] + E[:, nu:] @ X[k]
    return X


def generator_solution(gen, max_cond=1e8):
    """Closed-form ``omega(t) = exp(S t) omega0`` via eigendecomposition.

    Returns a function of a time array (rows are times), or None when
    ``S`` is not safely diagonalizable.
    """
    lam, V = np.linalg.eig(gen.S)
    if np.linalg.cond(V) > max_cond:
        return None
    c = np.linalg.solve(V, gen.omega0.ravel().astype(complex))
    Vc = V * c

    def omega(t):
        return np.real(np.exp(np.multiply.outer(t, lam)) @ Vc.T)

    # omega(t) = Re(sum_k exp(lam_k t) * modes[1][:, k])
    omega.modes = (lam, Vc.T)
    return omega


def simulate_interconnection(
    gen, systems, config, x0=None, t_eval=None, exact_generator=True, linear="integrate"
):
    """Drive one or several systems with ``u = L omega``, ``omega' = S omega``.

    ``systems`` items may be a StateSpace, a ReducedModel, a
    NonlinearReducedModel, ``(NonlinearReducedModel, order)`` for a truncated
    output, or ``(PolyVectorField, h)``. States start at zero unless ``x0``
    (a list with one entry per system) is given. Returns the outputs, one
    column per system; ``meta["omega"]`` holds the generator state.

    With ``exact_generator`` the generator is evaluated in closed form
    (when ``S`` is diagonalizable) instead of being integrated, so phase
    errors cannot build up over long horizons. ``linear="exact"`` also
    propagates systems with linear state equations by matrix exponentials
    on the sample grid, which avoids amplified integration error when their
    dynamics are strongly non-normal. An array ``abs_tol`` covers only the
    integrated states, in order.
    """
    if linear not in ("integrate", "exact"):
        raise ValueError(f"unknown linear mode {linear!r}")
    single = not isinstance(systems, list)
    items = [systems] if single else systems
    dyn = [_dynamics(it) for it in items]
    omega = generator_solution(gen) if exact_generator else None
    exact = [linear == "exact" and omega is not None and d[3] is not None for d in dyn]
    starts = []
    for i, d in enumerate(dyn):
        if x0 is None or x0[i] is None:
            starts.append(np.zeros(d[0]))
        else:
            starts.append(np.asarray(x0[i], float).ravel())
    integ = [i for i in range(len(dyn)) if not exact[i]]
    lead = 0 if omega is not None else gen.nu
    offs = np.cumsum([lead] + [dyn[i][0] for i in integ])
    total = offs[-1]
    S, L = gen.S, gen.L.ravel()
    times = np.linspace(0.0, config.t_final, config.samples) if t_eval is None else np.asarray(t_eval, float)

    if omega is not None and integ and all(dyn[i][3] is not None for i in integ):
        # every integrated system is linear: fuse them into one matrix
        M = np.zeros((total, total))
        b = np.zeros(total)
        for i, a in zip(integ, offs[:-1]):
            F, G = dyn[i][3]
            n = dyn[i][0]
            M[a : a + n, a : a + n] = F
            b[a : a + n] = G
        lam, coef = omega.modes
        lcoef = coef @ L

        def fun(t, z):
            return M @ z + b * np.real(np.exp(lam * t) @ lcoef)

    else:
        fun = None

    def _coupled_rhs(t, z):
        dz = np.empty(total)
        if omega is None:
            w = z[: gen.nu]
            dz[: gen.nu] = S @ w
        else:
            w = omega(t)
        u = L @ w
        for i, a in zip(integ, offs[:-1]):
            n, rhs = dyn[i][0], dyn[i][1]
            dz[a : a + n] = rhs(z[a : a + n], u)
        return dz

    if fun is None:
        fun = _coupled_rhs

    meta = {"nfev": 0, "steps": 0, "rejected": 0}
    states = [None] * len(dyn)
    if total:
        z0 = ([] if omega is not None else [gen.omega0.ravel()]) + [starts[i] for i in integ]
        traj = integrate_rk23(fun, np.concatenate(z0), config, times)
        Z = traj.values
        meta.update(traj.meta)
        for i, a in zip(integ, offs[:-1]):
            states[i] = Z[:, a : a + dyn[i][0]]
        W = Z[:, : gen.nu] if omega is None else omega(times)
    else:
        W = omega(times)
    if any(exact):
        # exact propagation starts from t = 0
        grid = times if times[0] == 0.0 else np.concatenate([[0.0], times])
        Wg = omega(grid)
        for i in range(len(dyn)):
            if exact[i]:
                F, G = dyn[i][3]
                X = _propagate_linear(F, G, S, L, Wg, grid, starts[i])
                states[i] = X[grid.size - times.size :]
    values = np.column_stack([dyn[i][2](states[i]) for i in range(len(dyn))])
    meta["omega"] = W
    meta["states"] = states
    return Trajectory(times, values[:, 0] if single else values, meta)


def steady_state_amplitudes(pi, gen, samples=2001):
    """Per-component peak of ``pi(omega(t))`` over one period of the slowest
    generator frequency (or ``[0, 1]`` if ``S`` has no oscillation)."""
    lam = np.linalg.eigvals(gen.S)
    freqs = np.abs(lam.imag)
    freqs = freqs[freqs > 0]
    span = 2 * np.pi / freqs.min() if freqs.size else 1.0
    omega = generator_solution(gen)
    if omega is None:
        raise ValueError("S is not diagonalizable")
    W = omega(np.linspace(0.0, span, samples))
    return np.abs(pi(W)).max(axis=0)


def compare_nonlinear(field, h, model, gen, config, orders=(1, 3)):
    """Simulate the polynomial system and its reduced model side by side.

    Columns of the result are ``y`` followed by ``psi`` truncated at each of
    ``orders``. The full system's absolute tolerance is ``config.abs_tol``
    times the steady-state amplitude of each state, which keeps error
    control meaningful when states differ by many orders of magnitude. The
    reduced model's linear state equation is propagated exactly.
    """
    amp = steady_state_amplitudes(model.pi, gen)
    amp = np.maximum(amp, 1e-30 * max(amp.max(), 1e-300))
    cfg = SimConfig(
        config.t_final,
        config.rel_tol,
        float(np.max(config.abs_tol)) * amp,
        config.steady_state_fraction,
        config.samples,
        config.max_step,
    )
    items = [(field, h)] + [(model, k) for k in orders]
    return simulate_interconnection(gen, items, cfg, linear="exact")


def rms_value(traj, window_start=0.0):
    """Trapezoidal r.m.s. of ``traj`` over ``[window_start, t_end]``.

    Vector-valued samples use the Euclidean norm.
    """
    w = traj.window(window_start)
    if w.times.size < 2 or w.times[-1] <= w.times[0]:
        raise EmptyWindow(f"no samples after t = {window_start}")
    v = w.values
    sq = v**2 if v.ndim == 1 else np.sum(v**2, axis=1)
    return float(np.sqrt(np.trapezoid(sq, w.times) / (w.times[-1] - w.times[0])))


def _slowest_decay(*mats):
    rates = [-np.max(np.linalg.eigvals(M).real) for M in mats]
    return min(rates)


def default_horizon(gen, *mats, periods=20):
    """``20 / |Re lambda_slowest|``, but at least ``periods`` periods of the
    slowest generator frequency."""
    rate = _slowest_decay(*mats)
    horizon = 20.0 / rate
    freqs = np.abs(np.linalg.eigvals(gen.S).imag)
    freqs = freqs[freqs > 0]
    if freqs.size:
        horizon = max(horizon, periods * 2 * np.pi / freqs.min())
    return horizon


def _check_hypotheses(sys, model, gen):
    if not np.all(sys.eigenvalues().real < 0):
        raise Unstable("system")
    if not np.all(np.linalg.eigvals(model.F).real < 0):
        raise Unstable("model")
    if not gen.is_skew(1e-10):
        raise NotSkewSymmetric("S + S^T != 0")


def steady_state_error_prediction(sys, model, gen, times):
    """``(C Pi - H P) omega(t)`` with ``omega(t) = exp(S t) omega0``."""
    E = (sys.C @ solve_pi(sys, gen) - model.H @ solve_P(model, gen)).ravel()
    times = np.asarray(times, dtype=float)
    lam, V = np.linalg.eig(gen.S)
    c = np.linalg.solve(V, gen.omega0.ravel())
    a = (E @ V) * c
    vals = np.real(np.exp(np.outer(times, lam)) @ a)
    return Trajectory(times, vals)


def steady_state_rms(sys, model, gen):
    """Exact r.m.s. of the predicted steady-state error over all time.

    For skew-symmetric ``S`` the signal is a sum of sinusoids, so the
    time average of its square is the sum over distinct frequencies of
    the squared mode amplitudes.
    """
    E = (sys.C @ solve_pi(sys, gen) - model.H @ solve_P(model, gen)).ravel()
    lam, V = np.linalg.eig(gen.S)
    a = (E @ V) * np.linalg.solve(V, gen.omega0.ravel())
    freq = lam.imag
    tol = 1e-9 * (1 + np.abs(freq).max())
    total, used = 0.0, np.zeros(freq.size, bool)
    for i in range(freq.size):
        if used[i]:
            continue
        grp = np.abs(freq - freq[i]) <= tol
        used |= grp
        total += abs(a[grp].sum()) ** 2
    return float(np.sqrt(total))


MAX_SIMULATED_PERIODS = 2e4


def estimate_gamma_rms(
    sys, model, gen, config=None, method="simulate", return_error=False, linear="exact"
):
    """Ratio of steady-state error r.m.s. to ``||omega||`` r.m.s.

    ``method="simulate"`` integrates the error system from zero state and
    averages over the last ``steady_state_fraction`` of the horizon;
    ``method="exact"`` takes the limit of the steady-state prediction, and
    ``method="auto"`` falls back to it when :func:`default_horizon` spans
    more than ``MAX_SIMULATED_PERIODS`` periods of the fastest generator
    frequency.
    Both use the single trajectory from ``gen.omega0``, so they bound the
    true gain from below. With ``return_error`` a simulated estimate comes
    back as ``(estimate, error_trajectory)``.

    ``linear`` is passed to :func:`simulate_interconnection`. The default
    propagates both linear systems exactly on the sample grid; integrating
    them instead lets tolerance-level error through when ``F`` is far from
    normal.
    """
    _check_hypotheses(sys, model, gen)
    w_rms = float(np.linalg.norm(gen.omega0))
    if w_rms == 0.0:
        raise EmptyWindow("omega0 is zero")
    if method not in ("simulate", "exact", "auto"):
        raise ValueError(f"unknown method {method!r}")
    config = config or SimConfig()
    needed = default_horizon(gen, sys.A, model.F)
    if method == "auto":
        # decided by the horizon the transient needs, not the configured one
        fmax = np.abs(np.linalg.eigvals(gen.S).imag).max()
        method = "exact" if needed * fmax / (2 * np.pi) > MAX_SIMULATED_PERIODS else "simulate"
    if config.t_final is None:
        config = config.with_horizon(needed)
    elif method == "simulate":
        settle = 20.0 / _slowest_decay(sys.A, model.F)
        start = (1.0 - config.steady_state_fraction) * config.t_final
        if start < settle:
            log.warning("averaging starts at %.3g s, before the transient settles (%.3g s)", start, settle)
    if method == "exact":
        est = steady_state_rms(sys, model, gen) / w_rms
        return (est, None) if return_error else est
    traj = simulate_interconnection(gen, [sys, model], config, linear=linear)
    err = Trajectory(traj.times, traj.values[:, 0] - traj.values[:, 1], traj.meta)
    start = (1.0 - config.steady_state_fraction) * config.t_final
    w = Trajectory(traj.times, traj.meta["omega"])
    est = rms_value(err, start) / rms_value(w, start)
    return (est, err) if return_error else est


def frequency_response(system, omegas):
    """``W(i omega) = C (i omega I - A)^-1 B`` for each frequency."""
    if isinstance(system, ReducedModel):
        system = system.as_state_space()
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    eig = system.eigenvalues()
    for w in omegas:
        if spectra_distance([1j * w], eig) <= disjointness_tol([1j * w], eig):
            raise PointInSpectrum(f"i*{w} is an eigenvalue of A")
    return system.transfer(1j * omegas)

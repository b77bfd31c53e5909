import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsmm import (
    InterpolationSpec,
    NotAdmissible,
    NotConditionedInvariant,
    PointInSpectrum,
    RankDeficient,
    ReducedModel,
    ReductionParams,
    SignalGenerator,
    SpectraOverlap,
    StateSpace,
    assemble_family,
    build_canonical_T,
    build_fss,
    build_generator,
    derive_Q,
    dominant_eigenvalues,
    dominant_reduction_pipeline,
    dual_path_model,
    error_bound,
    fss_spec,
    index_J,
    is_controllable,
    moments_closed_form,
    project_model,
    solve_pi,
    solve_relaxed,
    surrogate_generator,
    surrogate_model,
)

from instances import admissible_params, frequencies, skew_generator, stable_matrix, stable_system

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])
LAG = StateSpace([[-1.0]], [[1.0]], [[1.0]])


def _close_sets(a, b, tol):
    a, b = np.sort_complex(np.asarray(a, complex)), np.sort_complex(np.asarray(b, complex))
    return a.shape == b.shape and np.max(np.abs(a - b)) <= tol


def _random_instance(rng, n=None, half_nu=None, r=None):
    n = n or int(rng.integers(4, 9))
    half_nu = half_nu or int(rng.integers(1, n // 2 + 1))
    gen = skew_generator(rng, 2 * half_nu)
    r = r or min(int(rng.integers(1, 4)), gen.nu)
    sys = stable_system(rng, n)
    return sys, gen, admissible_params(rng, gen, r)


def _draw(rng, n=None, half_nu=None, r=None):
    from lsmm.errors import PairSplit

    for _ in range(50):
        try:
            return _random_instance(rng, n, half_nu, r)
        except (RuntimeError, PairSplit):
            continue
    raise RuntimeError("no instance")


class TestMoments:
    def test_lag_at_zero(self):
        spec = InterpolationSpec((0j,), (2,))
        assert moments_closed_form(LAG, spec).values == pytest.approx([1, 1, 1])

    def test_lag_on_axis(self):
        spec = InterpolationSpec((1j, -1j), (0, 0))
        m = moments_closed_form(LAG, spec)
        assert m.at(0, 0) == pytest.approx(1 / (1 + 1j))
        assert m.at(1, 0) == pytest.approx(np.conj(m.at(0, 0)))

    def test_point_in_spectrum(self):
        with pytest.raises(PointInSpectrum):
            moments_closed_form(LAG, InterpolationSpec((-1.0,), (0,)))

    def test_length_is_nu(self):
        spec = InterpolationSpec((0j, 2j, -2j), (1, 2, 2))
        assert len(moments_closed_form(LAG, spec)) == spec.nu


class TestPi:
    def test_static(self):
        gen = SignalGenerator(np.zeros((1, 1)), np.ones((1, 1)))
        Pi = solve_pi(LAG, gen)
        assert Pi == pytest.approx(np.ones((1, 1)))
        assert (LAG.C @ Pi)[0, 0] == pytest.approx(moments_closed_form(LAG, InterpolationSpec((0j,), (0,))).values[0])

    def test_rotation(self):
        Pi = solve_pi(LAG, SignalGenerator(ROT, np.array([[1.0, 0.0]])))
        assert Pi == pytest.approx(np.array([[0.5, -0.5]]))

    def test_overlap(self):
        with pytest.raises(SpectraOverlap):
            solve_pi(StateSpace([[0.0]], [[1.0]], [[1.0]]), SignalGenerator(np.zeros((1, 1)), np.ones((1, 1))))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_entries_are_moments_up_to_sign(self, seed):
        rng = np.random.default_rng(seed)
        sys = stable_system(rng, int(rng.integers(2, 8)))
        spec = InterpolationSpec.from_frequencies(frequencies(rng, int(rng.integers(1, 4))))
        gen = build_generator(spec)
        cf = build_canonical_T(gen)
        row = (sys.C @ solve_pi(sys, gen) @ cf.T).ravel()
        eta = moments_closed_form(sys, InterpolationSpec(cf.points, cf.orders)).values
        assert np.abs(row) == pytest.approx(np.abs(eta), rel=1e-8, abs=1e-12)


class TestIndexJ:
    def test_exact_model_has_zero_index(self):
        rng = np.random.default_rng(3)
        sys = stable_system(rng, 6)
        gen = skew_generator(rng, 4)
        model = surrogate_model(sys, gen, admissible_params(rng, gen, 4).Delta)
        scale = np.linalg.norm(sys.C @ solve_pi(sys, gen)) ** 2
        assert index_J(sys, model, gen) <= 1e-16 * max(scale, 1.0) * gen.nu

    def test_zero_outputs(self):
        sys = StateSpace(LAG.A, LAG.B, [[0.0]])
        gen = SignalGenerator(ROT, np.array([[1.0, 0.0]]))
        model = ReducedModel([[-2.0]], [[1.0]], [[0.0]])
        assert index_J(sys, model, gen) == 0.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_equals_moment_error_sum(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        sys = stable_system(rng, n)
        spec = InterpolationSpec.from_frequencies(frequencies(rng, int(rng.integers(1, 5))))
        gen = build_generator(spec)
        red = stable_system(rng, int(rng.integers(1, 4)))
        model = ReducedModel(red.A, red.B, red.C)
        cf = build_canonical_T(gen)
        eta = moments_closed_form(sys, InterpolationSpec(cf.points, cf.orders)).values
        eta_hat = moments_closed_form(model.as_state_space(), InterpolationSpec(cf.points, cf.orders)).values
        oracle = float(np.sum(np.abs(eta - eta_hat) ** 2))
        assert index_J(sys, model, gen) == pytest.approx(oracle, rel=1e-8, abs=1e-14)


class TestDeriveQ:
    def test_coordinate_row(self):
        assert derive_Q([[1.0, 0.0]], np.eye(2)) == pytest.approx(np.array([[1.0], [0.0]]))

    def test_sum_row(self):
        assert derive_Q([[1.0, 1.0]], np.eye(2)) == pytest.approx(np.array([[0.5], [0.5]]))

    def test_square(self):
        T = np.array([[2.0, 1.0], [0.5, 3.0]])
        assert derive_Q(np.eye(2), T) == pytest.approx(np.eye(2))

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            derive_Q([[1.0, 1.0], [2.0, 2.0]], np.eye(2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_left_inverse(self, half_nu, seed):
        rng = np.random.default_rng(seed)
        gen = skew_generator(rng, 2 * half_nu)
        P = rng.standard_normal((int(rng.integers(1, gen.nu + 1)), gen.nu))
        Q = derive_Q(P, build_canonical_T(gen).T)
        assert P @ Q == pytest.approx(np.eye(P.shape[0]), abs=1e-10)


class TestFamily:
    def test_full_order_collapse(self):
        rng = np.random.default_rng(5)
        sys = stable_system(rng, 5)
        gen = skew_generator(rng, 4)
        Delta = admissible_params(rng, gen, 4).Delta
        model = assemble_family(sys, gen, ReductionParams(np.eye(4), Delta, np.eye(4)))
        assert model.F == pytest.approx(gen.S - Delta @ gen.L)
        assert model.G == pytest.approx(Delta)
        assert model.H == pytest.approx(sys.C @ solve_pi(sys, gen))
        assert index_J(sys, model, gen) <= 1e-20

    def test_rank_deficient_P(self):
        rng = np.random.default_rng(6)
        sys = stable_system(rng, 4)
        gen = skew_generator(rng, 4)
        Delta = admissible_params(rng, gen, 2).Delta
        params = ReductionParams(np.ones((2, 4)), Delta, np.eye(4))
        with pytest.raises(NotAdmissible) as err:
            assemble_family(sys, gen, params)
        assert err.value.condition == "A_P"

    def test_kernel_not_invariant(self):
        rng = np.random.default_rng(8)
        sys = stable_system(rng, 4)
        gen = skew_generator(rng, 4)
        good = admissible_params(rng, gen, 2)
        # a generic row space is conditioned invariant here but not Delta-invariant
        P = good.P + 0.3 * rng.standard_normal(good.P.shape)
        with pytest.raises(NotAdmissible) as err:
            assemble_family(sys, gen, ReductionParams(P, good.Delta, good.T))
        assert err.value.condition in ("A_P", "A_Delta")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_controllable(self, seed):
        sys, gen, params = _draw(np.random.default_rng(seed))
        model = assemble_family(sys, gen, params)
        assert is_controllable(model.F, model.G)

    def test_rank_deficient_P_gives_uncontrollable_pair(self):
        rng = np.random.default_rng(9)
        sys, gen, params = _draw(rng, n=6, half_nu=3, r=2)
        P = np.vstack([params.P[:1], params.P[:1]])
        Q = np.linalg.pinv(P)
        bad = ReductionParams(P, params.Delta, params.T, Q)
        model = assemble_family(sys, gen, bad, check=False)
        assert not is_controllable(model.F, model.G)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_family_minimizes_index(self, seed):
        rng = np.random.default_rng(seed)
        sys, gen, params = _draw(rng)
        model = assemble_family(sys, gen, params)
        J0 = index_J(sys, model, gen)
        # the constraint pins P, so admissible competitors differ in H
        # (and in the placed eigenvalues through Delta)
        for _ in range(10):
            H = model.H + rng.standard_normal(model.H.shape) * 10.0 ** rng.uniform(-6, 0)
            other = ReducedModel(model.F, model.G, H)
            assert J0 <= index_J(sys, other, gen) + 1e-12

    def test_dominant_pipeline_eigenvalues(self):
        sys = build_fss()
        model, _ = dominant_reduction_pipeline(sys, fss_spec(), 10)
        expected = dominant_eigenvalues(sys.eigenvalues(), 10)
        assert _close_sets(np.linalg.eigvals(model.F), expected, 1e-6 * np.max(np.abs(expected)))


class TestRelaxed:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_agrees_with_family(self, seed):
        sys, gen, params = _draw(np.random.default_rng(seed))
        fam = assemble_family(sys, gen, params)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rel = solve_relaxed(sys, gen, params.P, params.T)
        assert rel.H == pytest.approx(fam.H, rel=1e-8, abs=1e-10)
        if params.r < gen.nu:
            # with r = nu the rows of L lie in the row space of P and (F, G)
            # is not unique; otherwise the constraint pins it down
            assert rel.F == pytest.approx(fam.F, rel=1e-8, abs=1e-8)
        assert index_J(sys, rel, gen) == pytest.approx(index_J(sys, fam, gen), rel=1e-8, abs=1e-14)

    def test_full_order_exact(self):
        rng = np.random.default_rng(11)
        sys = stable_system(rng, 4)
        gen = skew_generator(rng, 4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = solve_relaxed(sys, gen, np.eye(4))
        assert index_J(sys, model, gen) <= 1e-18

    def test_inconsistent_constraint(self):
        gen = SignalGenerator(ROT, np.array([[1.0, 0.0]]))
        with pytest.raises(NotConditionedInvariant):
            solve_relaxed(LAG, gen, np.array([[1.0, 0.0]]))


class TestErrorBound:
    def test_exact_model(self):
        rng = np.random.default_rng(12)
        sys = stable_system(rng, 5)
        gen = skew_generator(rng, 4)
        model = surrogate_model(sys, gen, admissible_params(rng, gen, 4).Delta)
        assert error_bound(sys, model, gen) <= 1e-12

    def test_zero_model(self):
        rng = np.random.default_rng(13)
        sys = stable_system(rng, 5)
        gen = skew_generator(rng, 4)
        model = ReducedModel([[-1.0]], [[1.0]], [[0.0]])
        assert error_bound(sys, model, gen) == pytest.approx(np.linalg.norm(sys.C @ solve_pi(sys, gen)))


class TestPipeline:
    def test_diagonal_chain(self):
        sys = StateSpace(np.diag([-1.0, -2.0, -3.0, -4.0]), np.ones((4, 1)), np.ones((1, 4)))
        spec = InterpolationSpec.from_frequencies([1.0, 2.0])
        model, params = dominant_reduction_pipeline(sys, spec, 2)
        assert _close_sets(np.linalg.eigvals(model.F), [-1.0, -2.0], 1e-6)
        assert params.r == 2

    def test_full_order(self):
        A = np.array([[-0.4, 1.5, 0, 0], [-1.5, -0.4, 0, 0], [0, 0, -1.0, 0], [0, 0, 0, -2.5]])
        sys = StateSpace(A, np.ones((4, 1)), [[1.0, 0.0, 2.0, -1.0]])
        spec = InterpolationSpec.from_frequencies([0.7, 2.0])
        with pytest.warns(UserWarning):
            model, params = dominant_reduction_pipeline(sys, spec, 4)
        Fbar = build_generator(spec).S - params.Delta @ build_generator(spec).L
        assert _close_sets(np.linalg.eigvals(model.F), np.linalg.eigvals(Fbar), 1e-8)
        assert _close_sets(np.linalg.eigvals(model.F), np.linalg.eigvals(A), 1e-6)

    @pytest.mark.parametrize("basis", ["eigen", "orthonormal"])
    def test_bases_give_same_spectrum(self, basis):
        sys = StateSpace(np.diag([-0.5, -1.0, -2.0, -3.0, -5.0, -8.0]), np.ones((6, 1)), np.arange(1.0, 7.0)[None])
        spec = InterpolationSpec.from_frequencies([0.5, 1.5])
        model, _ = dominant_reduction_pipeline(sys, spec, 2, basis=basis)
        assert _close_sets(np.linalg.eigvals(model.F), [-0.5, -1.0], 1e-8)

    def test_warns_on_few_moments(self):
        sys = StateSpace(np.diag([-1.0, -2.0, -3.0, -4.0]), np.ones((4, 1)), np.ones((1, 4)))
        with pytest.warns(UserWarning):
            dominant_reduction_pipeline(sys, InterpolationSpec.from_frequencies([1.0]), 2)


class TestSurrogate:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_zero_index_and_projection(self, seed):
        sys, gen, params = _draw(np.random.default_rng(seed))
        sur = surrogate_model(sys, gen, params.Delta)
        scale = max(1.0, np.linalg.norm(sur.H) ** 2)
        assert index_J(sys, sur, gen) <= 1e-12 * scale
        proj = project_model(sur, params.P, params.Q)
        fam = assemble_family(sys, gen, params)
        for name in "FGH":
            assert getattr(proj, name) == pytest.approx(getattr(fam, name), rel=1e-10, abs=1e-10)

    def test_zero_delta(self):
        gen = SignalGenerator(ROT, np.array([[1.0, 0.0]]))
        with pytest.raises(SpectraOverlap):
            surrogate_model(LAG, gen, np.zeros((2, 1)))


class TestSurrogateGenerator:
    def test_identity(self):
        gen = SignalGenerator(ROT, np.array([[1.0, 0.0]]))
        red = surrogate_generator(gen, np.eye(2), np.eye(2))
        assert red.S == pytest.approx(gen.S) and red.L == pytest.approx(gen.L)

    def test_not_left_inverse(self):
        gen = SignalGenerator(ROT, np.array([[1.0, 0.0]]))
        with pytest.raises(RankDeficient):
            surrogate_generator(gen, np.array([[1.0, 0.0]]), np.array([[2.0], [0.0]]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_dual_path_matches_F_and_G(self, seed):
        sys, gen, params = _draw(np.random.default_rng(seed))
        fam = assemble_family(sys, gen, params)
        dual = dual_path_model(sys, gen, params)
        assert dual.F == pytest.approx(fam.F, rel=1e-10, abs=1e-10)
        assert dual.G == pytest.approx(fam.G, rel=1e-10, abs=1e-10)
